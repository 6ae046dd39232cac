//! Tractable graph generation with invariant probabilistic circuits.
//!
//! The core is generic over the scalar type; the aliases below fix it to
//! `f64` (the default everywhere) or `f32`.

pub mod chem;
pub mod circuit;
pub mod data;
pub mod graphrep;
pub mod invariance;
pub mod model_io;
pub mod oracle;
pub mod queries;
pub mod scalar;

pub type Circuit = circuit::Circuit<f64>;
pub type Circuit32 = circuit::Circuit<f32>;
pub type Model = invariance::GraphSPNModel<f64>;
pub type Model32 = invariance::GraphSPNModel<f32>;
