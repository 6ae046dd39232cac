use std::fmt;

use super::{Circuit, LayerKind};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Children of a sum layer with differing scopes.
    Smoothness {
        layer: usize,
        scopes: Vec<Vec<usize>>,
    },
    /// Two children of a product layer sharing variables.
    Decomposability {
        layer: usize,
        left: usize,
        right: usize,
        shared: Vec<usize>,
    },
    /// Root scope is not the full variable set.
    RootScope { missing: Vec<usize> },
    /// A weight row that does not normalize to one.
    WeightRow { layer: usize, row: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Smoothness { layer, scopes } => {
                write!(f, "sum layer {layer} mixes scopes {scopes:?}")
            }
            Violation::Decomposability {
                layer,
                left,
                right,
                shared,
            } => write!(
                f,
                "product layer {layer}: children {left} and {right} share variables {shared:?}"
            ),
            Violation::RootScope { missing } => {
                write!(f, "root scope misses variables {missing:?}")
            }
            Violation::WeightRow { layer, row } => {
                write!(f, "layer {layer} row {row} does not normalize")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

impl<T: Real> Circuit<T> {
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let tol = T::lit(1e-6);
        for (id, layer) in self.layers.iter().enumerate() {
            match &layer.kind {
                LayerKind::Sum(s) => {
                    let first = &self.layers[s.children[0]].scope;
                    if s.children.iter().any(|&c| &self.layers[c].scope != first) {
                        violations.push(Violation::Smoothness {
                            layer: id,
                            scopes: s
                                .children
                                .iter()
                                .map(|&c| self.layers[c].scope.clone())
                                .collect(),
                        });
                    }
                    for (row, w) in s.weights.chunks(s.inputs).enumerate() {
                        let total: T = w.iter().copied().sum();
                        if !total.is_finite() || (total - T::one()).abs() > tol {
                            violations.push(Violation::WeightRow { layer: id, row });
                        }
                    }
                }
                LayerKind::Product { children, .. } => {
                    for (i, &a) in children.iter().enumerate() {
                        for &b in &children[i + 1..] {
                            let shared = intersect(&self.layers[a].scope, &self.layers[b].scope);
                            if !shared.is_empty() {
                                violations.push(Violation::Decomposability {
                                    layer: id,
                                    left: a,
                                    right: b,
                                    shared,
                                });
                            }
                        }
                    }
                }
                LayerKind::Input(_) => {}
            }
        }
        let root_scope = &self.layers[self.root].scope;
        let missing: Vec<usize> = (0..self.var_count())
            .filter(|v| root_scope.binary_search(v).is_err())
            .collect();
        if !missing.is_empty() {
            violations.push(Violation::RootScope { missing });
        }
        ValidationReport { violations }
    }
}
