use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::eval::Leaf;
use super::{Assignment, Circuit, CircuitError, LayerKind, ProductKind, Result};
use crate::scalar::{log_sum_exp, Real};

/// Examples per parallel work item. Fixed so that gradient reduction order,
/// and therefore the trained bits, do not depend on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 256,
            step_size: 0.05,
            beta1: 0.9,
            beta2: 0.82,
            epsilon: 1e-8,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CircuitError::Training("epochs and batch_size must be positive".into()));
        }
        if !unit(self.step_size) || !unit(self.beta1) || !unit(self.beta2) {
            return Err(CircuitError::Training(
                "step_size, beta1 and beta2 must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// One training term: the objective is `log mean_t p(terms[t])`.
///
/// A single term is ordinary maximum likelihood; several terms express
/// permutation or sub-graph averages trained as one composite likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub terms: Vec<Assignment>,
}

impl Example {
    pub fn single(a: Assignment) -> Self {
        Self { terms: vec![a] }
    }
}

/// Supplies the examples of each epoch; may regenerate them per epoch.
pub trait ExampleSource {
    fn epoch_examples(&mut self, epoch: usize) -> Result<Vec<Example>>;
}

impl ExampleSource for Vec<Assignment> {
    fn epoch_examples(&mut self, _epoch: usize) -> Result<Vec<Example>> {
        Ok(self.iter().cloned().map(Example::single).collect())
    }
}

impl ExampleSource for Vec<Example> {
    fn epoch_examples(&mut self, _epoch: usize) -> Result<Vec<Example>> {
        Ok(self.clone())
    }
}

impl<F> ExampleSource for F
where
    F: FnMut(usize) -> Result<Vec<Example>>,
{
    fn epoch_examples(&mut self, epoch: usize) -> Result<Vec<Example>> {
        self(epoch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Mean negative log-likelihood of each epoch, accumulated over its batches.
    pub epoch_nll: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> AdamState<T> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    /// One descent step along `grad` (the gradient of the loss).
    pub fn step(&mut self, c: &mut Circuit<T>, grad: &[T], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let alpha = T::lit(cfg.step_size);
        let eps = T::lit(cfg.epsilon);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let (m, v) = (&mut self.m, &mut self.v);
        c.apply_update(|i, p| {
            let g = grad[i];
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *p = *p - alpha * m_hat / (v_hat.sqrt() + eps);
        });
    }
}

struct Workspace<T> {
    values: Vec<Vec<T>>,
    adjoint: Vec<T>,
    inputs: Vec<T>,
    expd: Vec<T>,
    input_adjoint: Vec<T>,
}

impl<T: Real> Circuit<T> {
    fn workspace(&self) -> Workspace<T> {
        Workspace {
            values: Vec::new(),
            adjoint: self.value_buffer(),
            inputs: Vec::new(),
            expd: Vec::new(),
            input_adjoint: Vec::new(),
        }
    }

    /// `log p(a)` and its gradient with respect to every unconstrained parameter.
    pub fn log_density_gradient(&self, a: &[usize]) -> Result<(T, Vec<T>)> {
        self.example_gradient(&Example::single(Assignment(a.to_vec())))
    }

    /// Composite objective of `ex` and its parameter gradient.
    pub fn example_gradient(&self, ex: &Example) -> Result<(T, Vec<T>)> {
        self.check_example(ex)?;
        let mut grad = vec![T::zero(); self.param_count()];
        let mut ws = self.workspace();
        let obj = self.accumulate(ex, &mut grad, &mut ws);
        Ok((obj, grad))
    }

    fn check_example(&self, ex: &Example) -> Result<()> {
        if ex.terms.is_empty() {
            return Err(CircuitError::Training("example without terms".into()));
        }
        ex.terms.iter().try_for_each(|a| self.check_assignment(a))
    }

    fn accumulate(&self, ex: &Example, grad: &mut [T], ws: &mut Workspace<T>) -> T {
        let n = ex.terms.len();
        while ws.values.len() < n {
            ws.values.push(self.value_buffer());
        }
        let mut lds = Vec::with_capacity(n);
        for (a, values) in ex.terms.iter().zip(ws.values.iter_mut()) {
            self.forward(|v| Leaf::Observed(a[v]), values);
            lds.push(self.root_value(values));
        }
        let total = log_sum_exp(&lds);
        for (t, a) in ex.terms.iter().enumerate() {
            let weight = if n == 1 { T::one() } else { (lds[t] - total).exp() };
            if weight > T::zero() {
                let values = std::mem::take(&mut ws.values[t]);
                self.backward(a, &values, weight, grad, ws);
                ws.values[t] = values;
            }
        }
        total - T::from_count(n).ln()
    }

    fn backward(&self, a: &[usize], values: &[T], scale: T, grad: &mut [T], ws: &mut Workspace<T>) {
        let adj = &mut ws.adjoint;
        adj.fill(T::zero());
        adj[self.value_offsets[self.root]] = scale;
        for id in (0..self.layers.len()).rev() {
            let layer = &self.layers[id];
            let (lower, upper) = adj.split_at_mut(self.value_offsets[id]);
            let out_adj = &upper[..layer.units];
            if out_adj.iter().all(|&g| g == T::zero()) {
                continue;
            }
            let pbase = self.param_offsets[id];
            match &layer.kind {
                LayerKind::Input(l) => {
                    let units = layer.units;
                    for (local, &var) in layer.scope.iter().enumerate() {
                        let observed = a[var];
                        let start = l.offsets[local];
                        let cats = (l.offsets[local + 1] - start) / units;
                        for (u, &g) in out_adj.iter().enumerate() {
                            if g == T::zero() {
                                continue;
                            }
                            for c in 0..cats {
                                let k = start + c * units + u;
                                let ind = if c == observed { T::one() } else { T::zero() };
                                grad[pbase + k] = grad[pbase + k] + g * (ind - l.probs[k]);
                            }
                        }
                    }
                }
                LayerKind::Product {
                    children,
                    kind: ProductKind::Hadamard,
                } => {
                    for &c in children {
                        let ca = &mut lower[self.value_offsets[c]..self.value_offsets[c + 1]];
                        for (x, &g) in ca.iter_mut().zip(out_adj) {
                            *x = *x + g;
                        }
                    }
                }
                LayerKind::Product {
                    children,
                    kind: ProductKind::Kronecker,
                } => {
                    let widths: Vec<usize> = children.iter().map(|&c| self.layers[c].units).collect();
                    let mut digits = vec![0usize; children.len()];
                    for &g in out_adj {
                        if g != T::zero() {
                            for (k, &c) in children.iter().enumerate() {
                                let i = self.value_offsets[c] + digits[k];
                                lower[i] = lower[i] + g;
                            }
                        }
                        for k in (0..digits.len()).rev() {
                            digits[k] += 1;
                            if digits[k] < widths[k] {
                                break;
                            }
                            digits[k] = 0;
                        }
                    }
                }
                LayerKind::Sum(s) => {
                    ws.inputs.clear();
                    for &c in &s.children {
                        ws.inputs.extend_from_slice(self.layer_values(values, c));
                    }
                    let max = ws.inputs.iter().copied().fold(T::neg_infinity(), T::max);
                    if max == T::neg_infinity() {
                        continue;
                    }
                    ws.expd.clear();
                    ws.expd.extend(ws.inputs.iter().map(|&x| (x - max).exp()));
                    ws.input_adjoint.clear();
                    ws.input_adjoint.resize(s.inputs, T::zero());
                    let outs = self.layer_values(values, id);
                    for (j, &g) in out_adj.iter().enumerate() {
                        if g == T::zero() || outs[j] == T::neg_infinity() {
                            continue;
                        }
                        let total = (outs[j] - max).exp();
                        let row = &s.weights[j * s.inputs..(j + 1) * s.inputs];
                        let grow = &mut grad[pbase + j * s.inputs..pbase + (j + 1) * s.inputs];
                        for i in 0..s.inputs {
                            let r = row[i] * ws.expd[i] / total;
                            ws.input_adjoint[i] = ws.input_adjoint[i] + g * r;
                            grow[i] = grow[i] + g * (r - row[i]);
                        }
                    }
                    let mut i = 0;
                    for &c in &s.children {
                        let off = self.value_offsets[c];
                        for u in 0..self.layers[c].units {
                            lower[off + u] = lower[off + u] + ws.input_adjoint[i];
                            i += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Minimizes mean negative log-likelihood with ADAM.
///
/// Every epoch draws its examples from `data`, shuffles them with a generator
/// seeded once from `cfg.shuffle_seed`, and takes one step per mini-batch.
pub fn fit<T: Real, S: ExampleSource + ?Sized>(
    circuit: &mut Circuit<T>,
    data: &mut S,
    cfg: &TrainConfig,
) -> Result<FitReport> {
    cfg.check()?;
    let mut adam = AdamState::new(circuit.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let chunks_per_batch = cfg.batch_size.div_ceil(CHUNK);
    let mut buffers: Vec<Vec<T>> = Vec::new();
    let mut epoch_nll = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let examples = data.epoch_examples(epoch)?;
        if examples.is_empty() {
            return Err(CircuitError::Training("empty dataset".into()));
        }
        examples.iter().try_for_each(|ex| circuit.check_example(ex))?;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut rng);

        let mut nll_total = 0.0f64;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let n_chunks = batch.len().div_ceil(CHUNK).min(chunks_per_batch);
            while buffers.len() < n_chunks {
                buffers.push(vec![T::zero(); circuit.param_count()]);
            }
            let c: &Circuit<T> = circuit;
            let lls: Vec<T> = batch
                .par_chunks(CHUNK)
                .zip(buffers[..n_chunks].par_iter_mut())
                .map(|(idx, buf)| {
                    buf.fill(T::zero());
                    let mut ws = c.workspace();
                    let mut ll = T::zero();
                    for &i in idx {
                        ll = ll + c.accumulate(&examples[i], buf, &mut ws);
                    }
                    ll
                })
                .collect();
            let ll: T = lls.iter().copied().fold(T::zero(), |a, b| a + b);
            let ll64 = ll.to_f64().unwrap_or(f64::NAN);
            if !ll64.is_finite() {
                return Err(CircuitError::Training(format!(
                    "non-finite log-likelihood {ll64} at epoch {epoch}, batch {b}"
                )));
            }
            nll_total -= ll64;

            let (first, rest) = buffers[..n_chunks].split_first_mut().unwrap();
            for other in rest.iter() {
                for (g, &x) in first.iter_mut().zip(other) {
                    *g = *g + x;
                }
            }
            let scale = -T::one() / T::from_count(batch.len());
            for g in first.iter_mut() {
                *g = *g * scale;
            }
            if first.iter().any(|g| !g.is_finite()) {
                return Err(CircuitError::Training(format!(
                    "non-finite gradient at epoch {epoch}, batch {b}"
                )));
            }
            let grad = std::mem::take(first);
            adam.step(circuit, &grad, cfg);
            buffers[0] = grad;
        }
        epoch_nll.push(nll_total / examples.len() as f64);
    }
    Ok(FitReport { epoch_nll })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_circuit, CircuitBuilder, StructureConfig, VariableSpec};

    #[test]
    fn bernoulli_leaf_learns_empirical_frequency() {
        let spec = VariableSpec::new(vec![2]).unwrap();
        let mut b = CircuitBuilder::<f64>::new(spec);
        let l = b.uniform_input(&[0], 1).unwrap();
        let mut c = b.finish(l).unwrap();
        let mut data = vec![Assignment(vec![0]); 1000];
        let report = fit(&mut c, &mut data, &TrainConfig::default()).unwrap();
        assert_eq!(report.epoch_nll.len(), 40);
        assert!(c.log_density(&[0]).unwrap().exp() >= 0.99);
    }

    #[test]
    fn composite_example_gradient_is_weighted_sum() {
        let spec = VariableSpec::uniform(3, 3).unwrap();
        let cfg = StructureConfig {
            n_layers: 2,
            n_sum: 2,
            n_input: 2,
            n_repetitions: 2,
            structure_seed: 5,
        };
        let c: Circuit<f64> = build_circuit(&spec, &cfg).unwrap();
        let a = Assignment(vec![0, 1, 2]);
        let b = Assignment(vec![2, 2, 1]);
        let (la, ga) = c.log_density_gradient(&a).unwrap();
        let (lb, gb) = c.log_density_gradient(&b).unwrap();
        let (obj, g) = c
            .example_gradient(&Example {
                terms: vec![a, b],
            })
            .unwrap();
        let lse = log_sum_exp(&[la, lb]);
        assert!((obj - (lse - 2f64.ln())).abs() < 1e-12);
        let (wa, wb) = ((la - lse).exp(), (lb - lse).exp());
        for i in 0..g.len() {
            assert!((g[i] - (wa * ga[i] + wb * gb[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn training_rejects_bad_input() {
        let spec = VariableSpec::new(vec![2]).unwrap();
        let mut b = CircuitBuilder::<f64>::new(spec);
        let l = b.uniform_input(&[0], 1).unwrap();
        let mut c = b.finish(l).unwrap();
        let mut empty: Vec<Assignment> = vec![];
        assert!(fit(&mut c, &mut empty, &TrainConfig::default()).is_err());
        let mut bad = vec![Assignment(vec![0, 1])];
        assert!(fit(&mut c, &mut bad, &TrainConfig::default()).is_err());
        let cfg = TrainConfig {
            beta2: 1.0,
            ..TrainConfig::default()
        };
        let mut ok = vec![Assignment(vec![0])];
        assert!(fit(&mut c, &mut ok, &cfg).is_err());
    }
}
