//! Layered sum-product circuit over categorical variables.
//!
//! A [`Circuit`] is a DAG of layers stored in topological order: every layer
//! only refers to layers with a smaller index. Each layer holds a vector of
//! units over a common scope:
//!
//! * input layers hold `units` fully factorized categorical distributions over
//!   their scope,
//! * product layers combine children with disjoint scopes, either elementwise
//!   (Hadamard) or as an outer product (Kronecker),
//! * sum layers mix the concatenated units of children sharing one scope.
//!
//! All parameters are unconstrained logits. Normalized probabilities are cached
//! next to them and refreshed whenever the logits change, so evaluation never
//! renormalizes.

mod build;
mod eval;
mod sample;
mod text;
mod train;
mod validate;

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::scalar::{softmax_into, Real};

pub use build::build_circuit;
pub use eval::LeafTable;
pub use sample::Conditioned;
pub use text::TextError;
pub(crate) use text::{read_layers, write_layers, Lines};
pub use train::{fit, AdamState, Example, ExampleSource, FitReport, TrainConfig};
pub use validate::{ValidationReport, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("variable spec: {0}")]
    Spec(String),
    #[error("structure: {0}")]
    Structure(String),
    #[error("expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("variable {var}: category {value} out of range (size {size})")]
    CategoryOutOfRange { var: usize, value: usize, size: usize },
    #[error("evidence has zero probability")]
    ImpossibleEvidence,
    #[error("training: {0}")]
    Training(String),
    #[error("parameter vector has length {found}, circuit has {expected}")]
    ParamLength { expected: usize, found: usize },
}

pub type Result<T, E = CircuitError> = std::result::Result<T, E>;

/// Number of categories of every variable in the root scope.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VariableSpec {
    category_sizes: Vec<usize>,
}

impl VariableSpec {
    pub fn new(category_sizes: Vec<usize>) -> Result<Self> {
        if category_sizes.is_empty() {
            return Err(CircuitError::Spec("var_count must be positive".into()));
        }
        if let Some((i, &s)) = category_sizes.iter().enumerate().find(|(_, &s)| s < 2) {
            return Err(CircuitError::Spec(format!(
                "variable {i} has {s} categories, need at least 2"
            )));
        }
        Ok(Self { category_sizes })
    }

    pub fn uniform(var_count: usize, categories: usize) -> Result<Self> {
        Self::new(vec![categories; var_count])
    }

    pub fn var_count(&self) -> usize {
        self.category_sizes.len()
    }

    pub fn categories(&self, var: usize) -> usize {
        self.category_sizes[var]
    }

    pub fn category_sizes(&self) -> &[usize] {
        &self.category_sizes
    }

    /// Number of joint assignments, `None` on overflow.
    pub fn domain_size(&self) -> Option<usize> {
        self.category_sizes
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
    }
}

/// Hyper-parameters of the randomized tensorized structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StructureConfig {
    pub n_layers: usize,
    pub n_sum: usize,
    pub n_input: usize,
    pub n_repetitions: usize,
    pub structure_seed: u64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            n_sum: 40,
            n_input: 40,
            n_repetitions: 40,
            structure_seed: 0,
        }
    }
}

/// One category index per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment(pub Vec<usize>);

impl std::ops::Deref for Assignment {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(v: Vec<usize>) -> Self {
        Assignment(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarState {
    Observed(usize),
    Marginalized,
}

/// Per-variable evidence for marginal queries and conditional sampling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryMask(pub Vec<VarState>);

impl QueryMask {
    pub fn all_marginalized(var_count: usize) -> Self {
        QueryMask(vec![VarState::Marginalized; var_count])
    }

    pub fn observed(a: &Assignment) -> Self {
        QueryMask(a.iter().map(|&c| VarState::Observed(c)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn states(&self) -> &[VarState] {
        &self.0
    }

    pub fn set(&mut self, var: usize, state: VarState) {
        self.0[var] = state;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProductKind {
    Hadamard,
    Kronecker,
}

/// `units` factorized categoricals over `scope`.
///
/// Parameters are laid out `[local var][category][unit]` so an observed value
/// selects one contiguous run of `units` log-probabilities.
#[derive(Debug, Clone)]
pub struct InputLayer<T> {
    offsets: Vec<usize>,
    logits: Vec<T>,
    probs: Vec<T>,
    log_probs: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct SumLayer<T> {
    children: Vec<usize>,
    inputs: usize,
    logits: Vec<T>,
    weights: Vec<T>,
    log_weights: Vec<T>,
}

#[derive(Debug, Clone)]
pub enum LayerKind<T> {
    Input(InputLayer<T>),
    Product {
        children: Vec<usize>,
        kind: ProductKind,
    },
    Sum(SumLayer<T>),
}

#[derive(Debug, Clone)]
pub struct Layer<T> {
    scope: Vec<usize>,
    units: usize,
    kind: LayerKind<T>,
}

impl<T> Layer<T> {
    /// Sorted variable indices this layer is defined over.
    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn kind(&self) -> &LayerKind<T> {
        &self.kind
    }

    pub fn children(&self) -> &[usize] {
        match &self.kind {
            LayerKind::Input(_) => &[],
            LayerKind::Product { children, .. } => children,
            LayerKind::Sum(s) => &s.children,
        }
    }

    fn param_count(&self) -> usize {
        match &self.kind {
            LayerKind::Input(l) => l.logits.len(),
            LayerKind::Product { .. } => 0,
            LayerKind::Sum(s) => s.logits.len(),
        }
    }
}

impl<T: Real> InputLayer<T> {
    fn refresh(&mut self, units: usize) {
        for w in self.offsets.windows(2) {
            let (start, end) = (w[0], w[1]);
            let cats = (end - start) / units;
            let mut col = vec![T::zero(); cats];
            let mut p = vec![T::zero(); cats];
            let mut lp = vec![T::zero(); cats];
            for u in 0..units {
                for (c, x) in col.iter_mut().enumerate() {
                    *x = self.logits[start + c * units + u];
                }
                softmax_into(&col, &mut p, &mut lp);
                for c in 0..cats {
                    self.probs[start + c * units + u] = p[c];
                    self.log_probs[start + c * units + u] = lp[c];
                }
            }
        }
    }

    /// Normalized probability of `category` for local variable `local` in `unit`.
    pub fn prob(&self, units: usize, local: usize, category: usize, unit: usize) -> T {
        self.probs[self.offsets[local] + category * units + unit]
    }

    #[cfg(test)]
    pub(crate) fn overwrite_prob(&mut self, index: usize, value: T) {
        self.probs[index] = value;
    }
}

impl<T: Real> SumLayer<T> {
    fn refresh(&mut self) {
        for ((l, w), lw) in self
            .logits
            .chunks(self.inputs)
            .zip(self.weights.chunks_mut(self.inputs))
            .zip(self.log_weights.chunks_mut(self.inputs))
        {
            softmax_into(l, w, lw);
        }
    }

    /// Row-normalized mixture weights, `units × inputs` row-major.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Number of inputs mixed by each unit.
    pub fn inputs(&self) -> usize {
        self.inputs
    }
}

/// A validated-shape circuit. Semantic validity (smoothness, decomposability)
/// is reported by [`Circuit::validate`].
#[derive(Debug)]
pub struct Circuit<T> {
    spec: VariableSpec,
    layers: Vec<Layer<T>>,
    root: usize,
    value_offsets: Vec<usize>,
    param_offsets: Vec<usize>,
    passes: AtomicU64,
}

impl<T: Clone> Clone for Circuit<T> {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            root: self.root,
            value_offsets: self.value_offsets.clone(),
            param_offsets: self.param_offsets.clone(),
            passes: AtomicU64::new(self.passes.load(Ordering::Relaxed)),
        }
    }
}

impl<T: Real> Circuit<T> {
    pub fn spec(&self) -> &VariableSpec {
        &self.spec
    }

    pub fn var_count(&self) -> usize {
        self.spec.var_count()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    #[cfg(test)]
    pub(crate) fn input_layer_mut(&mut self, id: usize) -> Option<&mut InputLayer<T>> {
        match &mut self.layers[id].kind {
            LayerKind::Input(l) => Some(l),
            _ => None,
        }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn param_count(&self) -> usize {
        *self.param_offsets.last().unwrap_or(&0)
    }

    /// Forward passes performed so far (every density, query or sampling pass).
    pub fn pass_count(&self) -> u64 {
        self.passes.load(Ordering::Relaxed)
    }

    pub fn reset_pass_count(&self) {
        self.passes.store(0, Ordering::Relaxed);
    }

    fn count_pass(&self) {
        self.passes.fetch_add(1, Ordering::Relaxed);
    }

    /// Flat copy of all unconstrained parameters, layer by layer.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match &layer.kind {
                LayerKind::Input(l) => out.extend_from_slice(&l.logits),
                LayerKind::Sum(s) => out.extend_from_slice(&s.logits),
                LayerKind::Product { .. } => {}
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(CircuitError::ParamLength {
                expected: self.param_count(),
                found: params.len(),
            });
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let range = self.param_offsets[i]..self.param_offsets[i + 1];
            match &mut layer.kind {
                LayerKind::Input(l) => l.logits.copy_from_slice(&params[range]),
                LayerKind::Sum(s) => s.logits.copy_from_slice(&params[range]),
                LayerKind::Product { .. } => {}
            }
        }
        self.refresh();
        Ok(())
    }

    pub(crate) fn apply_update(&mut self, mut f: impl FnMut(usize, &mut T)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let base = self.param_offsets[i];
            let logits = match &mut layer.kind {
                LayerKind::Input(l) => &mut l.logits,
                LayerKind::Sum(s) => &mut s.logits,
                LayerKind::Product { .. } => continue,
            };
            for (k, p) in logits.iter_mut().enumerate() {
                f(base + k, p);
            }
        }
        self.refresh();
    }

    fn refresh(&mut self) {
        for layer in &mut self.layers {
            match &mut layer.kind {
                LayerKind::Input(l) => l.refresh(layer.units),
                LayerKind::Sum(s) => s.refresh(),
                LayerKind::Product { .. } => {}
            }
        }
    }

    pub fn check_assignment(&self, a: &[usize]) -> Result<()> {
        if a.len() != self.var_count() {
            return Err(CircuitError::DimensionMismatch {
                expected: self.var_count(),
                found: a.len(),
            });
        }
        for (var, &value) in a.iter().enumerate() {
            let size = self.spec.categories(var);
            if value >= size {
                return Err(CircuitError::CategoryOutOfRange { var, value, size });
            }
        }
        Ok(())
    }

    pub fn check_mask(&self, q: &QueryMask) -> Result<()> {
        if q.len() != self.var_count() {
            return Err(CircuitError::DimensionMismatch {
                expected: self.var_count(),
                found: q.len(),
            });
        }
        for (var, s) in q.states().iter().enumerate() {
            if let VarState::Observed(value) = *s {
                let size = self.spec.categories(var);
                if value >= size {
                    return Err(CircuitError::CategoryOutOfRange { var, value, size });
                }
            }
        }
        Ok(())
    }
}

/// Incremental constructor for hand-built circuits.
///
/// Only shape errors (dangling references, wrong parameter counts, variables
/// outside the spec) are rejected here; smoothness and decomposability are
/// checked separately by [`Circuit::validate`].
#[derive(Debug)]
pub struct CircuitBuilder<T> {
    spec: VariableSpec,
    layers: Vec<Layer<T>>,
}

impl<T: Real> CircuitBuilder<T> {
    pub fn new(spec: VariableSpec) -> Self {
        Self {
            spec,
            layers: Vec::new(),
        }
    }

    pub fn spec(&self) -> &VariableSpec {
        &self.spec
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    fn expected_input_params(&self, scope: &[usize], units: usize) -> usize {
        scope.iter().map(|&v| self.spec.categories(v) * units).sum()
    }

    /// Input layer with explicit logits laid out `[local var][category][unit]`.
    pub fn input(&mut self, scope: &[usize], units: usize, logits: Vec<T>) -> Result<usize> {
        let mut sorted = scope.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != scope.len() || sorted.is_empty() || units == 0 {
            return Err(CircuitError::Structure(
                "input scope must be non-empty without duplicates and units positive".into(),
            ));
        }
        if let Some(&v) = sorted.iter().find(|&&v| v >= self.spec.var_count()) {
            return Err(CircuitError::Structure(format!("variable {v} outside spec")));
        }
        let expected = self.expected_input_params(&sorted, units);
        if logits.len() != expected {
            return Err(CircuitError::ParamLength {
                expected,
                found: logits.len(),
            });
        }
        let mut offsets = vec![0];
        for &v in &sorted {
            offsets.push(offsets.last().unwrap() + self.spec.categories(v) * units);
        }
        let n = logits.len();
        let mut layer = InputLayer {
            offsets,
            logits,
            probs: vec![T::zero(); n],
            log_probs: vec![T::zero(); n],
        };
        layer.refresh(units);
        self.layers.push(Layer {
            scope: sorted,
            units,
            kind: LayerKind::Input(layer),
        });
        Ok(self.layers.len() - 1)
    }

    /// Input layer whose categoricals are all uniform.
    pub fn uniform_input(&mut self, scope: &[usize], units: usize) -> Result<usize> {
        let n = self.expected_input_params(
            &scope
                .iter()
                .copied()
                .filter(|&v| v < self.spec.var_count())
                .collect::<Vec<_>>(),
            units,
        );
        self.input(scope, units, vec![T::zero(); n])
    }

    fn check_children(&self, children: &[usize]) -> Result<()> {
        if children.is_empty() {
            return Err(CircuitError::Structure("layer needs at least one child".into()));
        }
        if let Some(&c) = children.iter().find(|&&c| c >= self.layers.len()) {
            return Err(CircuitError::Structure(format!(
                "child {c} does not precede the new layer"
            )));
        }
        Ok(())
    }

    pub fn product(&mut self, children: &[usize], kind: ProductKind) -> Result<usize> {
        self.check_children(children)?;
        let units = match kind {
            ProductKind::Kronecker => children
                .iter()
                .try_fold(1usize, |acc, &c| acc.checked_mul(self.layers[c].units))
                .ok_or_else(|| CircuitError::Structure("kronecker width overflow".into()))?,
            ProductKind::Hadamard => {
                let u = self.layers[children[0]].units;
                if children.iter().any(|&c| self.layers[c].units != u) {
                    return Err(CircuitError::Structure(
                        "hadamard children must have equal widths".into(),
                    ));
                }
                u
            }
        };
        let mut scope: Vec<usize> = children
            .iter()
            .flat_map(|&c| self.layers[c].scope.iter().copied())
            .collect();
        scope.sort_unstable();
        scope.dedup();
        self.layers.push(Layer {
            scope,
            units,
            kind: LayerKind::Product {
                children: children.to_vec(),
                kind,
            },
        });
        Ok(self.layers.len() - 1)
    }

    /// Sum layer with `units` rows of logits over the concatenated child units.
    pub fn sum(&mut self, children: &[usize], units: usize, logits: Vec<T>) -> Result<usize> {
        self.check_children(children)?;
        if units == 0 {
            return Err(CircuitError::Structure("sum layer needs units".into()));
        }
        let inputs: usize = children.iter().map(|&c| self.layers[c].units).sum();
        if logits.len() != units * inputs {
            return Err(CircuitError::ParamLength {
                expected: units * inputs,
                found: logits.len(),
            });
        }
        let mut scope: Vec<usize> = children
            .iter()
            .flat_map(|&c| self.layers[c].scope.iter().copied())
            .collect();
        scope.sort_unstable();
        scope.dedup();
        let n = logits.len();
        let mut layer = SumLayer {
            children: children.to_vec(),
            inputs,
            logits,
            weights: vec![T::zero(); n],
            log_weights: vec![T::zero(); n],
        };
        layer.refresh();
        self.layers.push(Layer {
            scope,
            units,
            kind: LayerKind::Sum(layer),
        });
        Ok(self.layers.len() - 1)
    }

    pub fn finish(self, root: usize) -> Result<Circuit<T>> {
        if root >= self.layers.len() {
            return Err(CircuitError::Structure(format!("root {root} is not a layer")));
        }
        if self.layers[root].units != 1 {
            return Err(CircuitError::Structure(format!(
                "root layer must have a single unit, has {}",
                self.layers[root].units
            )));
        }
        let mut value_offsets = vec![0];
        let mut param_offsets = vec![0];
        for layer in &self.layers {
            value_offsets.push(value_offsets.last().unwrap() + layer.units);
            param_offsets.push(param_offsets.last().unwrap() + layer.param_count());
        }
        Ok(Circuit {
            spec: self.spec,
            layers: self.layers,
            root,
            value_offsets,
            param_offsets,
            passes: AtomicU64::new(0),
        })
    }
}
