use super::{Circuit, CircuitError, LayerKind, ProductKind, QueryMask, Result, VarState};
use crate::scalar::Real;

/// How an input unit treats one variable during a feed-forward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Leaf<'a, T> {
    Observed(usize),
    Marginalized,
    /// Nonnegative weight per category, integrated against the leaf.
    Table(&'a [T]),
}

/// A fully factorized function `f(x) = prod_v h_v(x_v)` with one optional
/// nonnegative weight table per variable (`None` means `h_v = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct LeafTable<T>(pub Vec<Option<Vec<T>>>);

impl<T: Real> LeafTable<T> {
    pub fn ones(var_count: usize) -> Self {
        LeafTable(vec![None; var_count])
    }

    /// Indicator tables reproducing a query mask.
    pub fn from_mask(q: &QueryMask, spec: &super::VariableSpec) -> Self {
        LeafTable(
            q.states()
                .iter()
                .enumerate()
                .map(|(v, s)| match *s {
                    VarState::Marginalized => None,
                    VarState::Observed(c) => {
                        let mut t = vec![T::zero(); spec.categories(v)];
                        t[c] = T::one();
                        Some(t)
                    }
                })
                .collect(),
        )
    }
}

impl<T: Real> Circuit<T> {
    pub(crate) fn value_buffer(&self) -> Vec<T> {
        vec![T::zero(); *self.value_offsets.last().unwrap()]
    }

    pub(crate) fn layer_values<'v>(&self, values: &'v [T], layer: usize) -> &'v [T] {
        &values[self.value_offsets[layer]..self.value_offsets[layer + 1]]
    }

    pub(crate) fn root_value(&self, values: &[T]) -> T {
        values[self.value_offsets[self.root]]
    }

    /// Bottom-up log-space evaluation of every layer into `values`.
    pub(crate) fn forward<'a, F>(&self, leaf: F, values: &mut [T])
    where
        F: Fn(usize) -> Leaf<'a, T>,
        T: 'a,
    {
        self.count_pass();
        let mut scratch: Vec<T> = Vec::new();
        let mut expd: Vec<T> = Vec::new();
        for (id, layer) in self.layers.iter().enumerate() {
            let (done, rest) = values.split_at_mut(self.value_offsets[id]);
            let out = &mut rest[..layer.units];
            let child = |c: usize| &done[self.value_offsets[c]..self.value_offsets[c + 1]];
            match &layer.kind {
                LayerKind::Input(l) => {
                    let units = layer.units;
                    out.fill(T::zero());
                    for (local, &var) in layer.scope.iter().enumerate() {
                        let base = l.offsets[local];
                        match leaf(var) {
                            Leaf::Observed(c) => {
                                let lp = &l.log_probs[base + c * units..base + (c + 1) * units];
                                for (o, &x) in out.iter_mut().zip(lp) {
                                    *o = *o + x;
                                }
                            }
                            Leaf::Marginalized => {}
                            Leaf::Table(h) => {
                                for (u, o) in out.iter_mut().enumerate() {
                                    let mass: T = h
                                        .iter()
                                        .enumerate()
                                        .map(|(c, &w)| w * l.probs[base + c * units + u])
                                        .sum();
                                    *o = *o + mass.ln();
                                }
                            }
                        }
                    }
                }
                LayerKind::Product {
                    children,
                    kind: ProductKind::Hadamard,
                } => {
                    out.fill(T::zero());
                    for &c in children {
                        for (o, &x) in out.iter_mut().zip(child(c)) {
                            *o = *o + x;
                        }
                    }
                }
                LayerKind::Product {
                    children,
                    kind: ProductKind::Kronecker,
                } => {
                    out[0] = T::zero();
                    let mut width = 1;
                    for &c in children {
                        let xs = child(c);
                        let k = xs.len();
                        for a in (0..width).rev() {
                            let base = out[a];
                            for b in (0..k).rev() {
                                out[a * k + b] = base + xs[b];
                            }
                        }
                        width *= k;
                    }
                }
                LayerKind::Sum(s) => {
                    let inputs: &[T] = if s.children.len() == 1 {
                        child(s.children[0])
                    } else {
                        scratch.clear();
                        for &c in &s.children {
                            scratch.extend_from_slice(child(c));
                        }
                        &scratch
                    };
                    let max = inputs.iter().copied().fold(T::neg_infinity(), T::max);
                    if max == T::neg_infinity() {
                        out.fill(T::neg_infinity());
                        continue;
                    }
                    expd.clear();
                    expd.extend(inputs.iter().map(|&x| (x - max).exp()));
                    let half = T::lit(0.5);
                    for (o, row) in out.iter_mut().zip(s.weights.chunks(s.inputs)) {
                        // Rows sum to one, so near the top of the range
                        // log(1 - sum w (1 - e)) keeps full precision and is
                        // exactly zero when every input equals the max.
                        let deficit: T = row.iter().zip(&expd).map(|(&w, &e)| w * (T::one() - e)).sum();
                        *o = if deficit < half {
                            max + (-deficit).ln_1p()
                        } else {
                            let total: T = row.iter().zip(&expd).map(|(&w, &e)| w * e).sum();
                            max + total.ln()
                        };
                    }
                }
            }
        }
    }

    /// `log p(a)` for a complete assignment.
    pub fn log_density(&self, a: &[usize]) -> Result<T> {
        self.check_assignment(a)?;
        let mut values = self.value_buffer();
        self.forward(|v| Leaf::Observed(a[v]), &mut values);
        Ok(self.root_value(&values))
    }

    /// Log-probability of the observed part of `q`, marginalizing the rest.
    pub fn log_query(&self, q: &QueryMask) -> Result<T> {
        self.check_mask(q)?;
        let mut values = self.value_buffer();
        self.query_forward(q, &mut values);
        Ok(self.root_value(&values))
    }

    pub(crate) fn query_forward(&self, q: &QueryMask, values: &mut [T]) {
        let states = q.states();
        self.forward(
            |v| match states[v] {
                VarState::Observed(c) => Leaf::Observed(c),
                VarState::Marginalized => Leaf::Marginalized,
            },
            values,
        );
    }

    /// `log E[f]` for a factorized nonnegative `f`.
    pub fn log_expectation(&self, f: &LeafTable<T>) -> Result<T> {
        if f.0.len() != self.var_count() {
            return Err(CircuitError::DimensionMismatch {
                expected: self.var_count(),
                found: f.0.len(),
            });
        }
        for (v, t) in f.0.iter().enumerate() {
            if let Some(t) = t {
                if t.len() != self.spec.categories(v) {
                    return Err(CircuitError::DimensionMismatch {
                        expected: self.spec.categories(v),
                        found: t.len(),
                    });
                }
                if t.iter().any(|&w| w < T::zero() || !w.is_finite()) {
                    return Err(CircuitError::Spec(format!(
                        "weight table of variable {v} must be finite and nonnegative"
                    )));
                }
            }
        }
        let mut values = self.value_buffer();
        self.forward(
            |v| match &f.0[v] {
                Some(t) => Leaf::Table(t),
                None => Leaf::Marginalized,
            },
            &mut values,
        );
        Ok(self.root_value(&values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_circuit, Assignment, CircuitBuilder, StructureConfig, VariableSpec};

    fn uniform_leaf() -> Circuit<f64> {
        let spec = VariableSpec::new(vec![4]).unwrap();
        let mut b = CircuitBuilder::new(spec);
        let l = b.uniform_input(&[0], 1).unwrap();
        b.finish(l).unwrap()
    }

    fn small(seed: u64) -> Circuit<f64> {
        let spec = VariableSpec::uniform(4, 3).unwrap();
        let cfg = StructureConfig {
            n_layers: 3,
            n_sum: 3,
            n_input: 2,
            n_repetitions: 2,
            structure_seed: seed,
        };
        let mut c: Circuit<f64> = build_circuit(&spec, &cfg).unwrap();
        // move away from the near-uniform initialization
        let p: Vec<f64> = (0..c.param_count())
            .map(|i| ((i * 7919 + seed as usize) % 23) as f64 / 5.0 - 2.0)
            .collect();
        c.set_params(&p).unwrap();
        c
    }

    #[test]
    fn uniform_leaf_density() {
        let c = uniform_leaf();
        assert!((c.log_density(&[2]).unwrap() - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn all_marginalized_is_exactly_zero() {
        let c = small(3);
        assert_eq!(c.log_query(&QueryMask::all_marginalized(4)).unwrap(), 0.0);
    }

    #[test]
    fn fully_observed_query_equals_density_bitwise() {
        let c = small(5);
        let a = Assignment(vec![2, 0, 1, 1]);
        let d = c.log_density(&a).unwrap();
        let q = c.log_query(&QueryMask::observed(&a)).unwrap();
        assert_eq!(d.to_bits(), q.to_bits());
        assert!(d <= 0.0);
    }

    #[test]
    fn expectation_of_indicators_matches_query() {
        let c = small(8);
        let mut q = QueryMask::all_marginalized(4);
        q.set(1, VarState::Observed(2));
        q.set(3, VarState::Observed(0));
        let via_query = c.log_query(&q).unwrap();
        let via_table = c
            .log_expectation(&LeafTable::from_mask(&q, c.spec()))
            .unwrap();
        assert!((via_query - via_table).abs() < 1e-12);
    }

    #[test]
    fn dimension_and_range_errors() {
        let c = small(1);
        assert!(matches!(
            c.log_density(&[0, 0, 0]),
            Err(CircuitError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            c.log_density(&[0, 0, 0, 3]),
            Err(CircuitError::CategoryOutOfRange { .. })
        ));
        assert!(c.log_query(&QueryMask::all_marginalized(5)).is_err());
    }

    #[test]
    fn pass_counter_counts_forward_passes() {
        let c = small(2);
        c.reset_pass_count();
        c.log_density(&[0, 1, 2, 0]).unwrap();
        c.log_query(&QueryMask::all_marginalized(4)).unwrap();
        assert_eq!(c.pass_count(), 2);
    }

    #[test]
    fn f32_circuits_evaluate() {
        let spec = VariableSpec::uniform(4, 3).unwrap();
        let c: Circuit<f32> = build_circuit(&spec, &StructureConfig {
            n_layers: 2,
            n_sum: 2,
            n_input: 2,
            n_repetitions: 2,
            structure_seed: 4,
        })
        .unwrap();
        let total: f32 = (0..81)
            .map(|i| {
                let a = [i % 3, (i / 3) % 3, (i / 9) % 3, i / 27];
                c.log_density(&a).unwrap().exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-4);
    }
}
