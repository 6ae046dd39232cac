use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Assignment, Circuit, CircuitError, LayerKind, ProductKind, QueryMask, Result, VarState};
use crate::scalar::Real;

/// Index drawn proportionally to `weights` (which sum to `total`).
fn draw<T: Real, R: Rng + ?Sized>(weights: impl Iterator<Item = T>, total: T, rng: &mut R) -> usize {
    let target = T::lit(rng.gen::<f64>()) * total;
    let mut acc = T::zero();
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w > T::zero() {
            last_positive = i;
            acc = acc + w;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

/// An evidence pass computed once and shared by any number of draws.
#[derive(Debug)]
pub struct Conditioned<'c, T> {
    circuit: &'c Circuit<T>,
    evidence: QueryMask,
    values: Vec<T>,
}

impl<T: Real> Conditioned<'_, T> {
    /// `log p(evidence)`.
    pub fn log_mass(&self) -> T {
        self.circuit.root_value(&self.values)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Assignment> {
        self.circuit.sample_down(&self.evidence, &self.values, rng)
    }
}

impl<T: Real> Circuit<T> {
    /// Runs the upward evidence pass; fails on zero-probability evidence.
    pub fn condition(&self, evidence: &QueryMask) -> Result<Conditioned<'_, T>> {
        Ok(Conditioned {
            circuit: self,
            evidence: evidence.clone(),
            values: self.evidence_pass(evidence)?,
        })
    }

    /// Conditional ancestral sample agreeing with every observed variable.
    pub fn sample(&self, evidence: &QueryMask, rng_seed: u64) -> Result<Assignment> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        self.sample_with(evidence, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, evidence: &QueryMask, rng: &mut R) -> Result<Assignment> {
        let values = self.evidence_pass(evidence)?;
        self.sample_down(evidence, &values, rng)
    }

    /// `count` independent samples sharing one upward pass; sample `i` uses
    /// stream `i` of a generator seeded with `rng_seed`.
    pub fn sample_many(&self, evidence: &QueryMask, count: usize, rng_seed: u64) -> Result<Vec<Assignment>> {
        let values = self.evidence_pass(evidence)?;
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                rng.set_stream(i as u64);
                self.sample_down(evidence, &values, &mut rng)
            })
            .collect()
    }

    fn evidence_pass(&self, evidence: &QueryMask) -> Result<Vec<T>> {
        self.check_mask(evidence)?;
        let mut values = self.value_buffer();
        self.query_forward(evidence, &mut values);
        if self.root_value(&values) == T::neg_infinity() {
            return Err(CircuitError::ImpossibleEvidence);
        }
        Ok(values)
    }

    fn sample_down<R: Rng + ?Sized>(&self, evidence: &QueryMask, values: &[T], rng: &mut R) -> Result<Assignment> {
        let states = evidence.states();
        let mut out = vec![usize::MAX; self.var_count()];
        let mut stack = vec![(self.root, 0usize)];
        let mut scratch: Vec<T> = Vec::new();
        while let Some((id, unit)) = stack.pop() {
            let layer = &self.layers[id];
            match &layer.kind {
                LayerKind::Input(l) => {
                    for (local, &var) in layer.scope.iter().enumerate() {
                        out[var] = match states[var] {
                            VarState::Observed(c) => c,
                            VarState::Marginalized => {
                                let cats = self.spec.categories(var);
                                draw(
                                    (0..cats).map(|c| l.prob(layer.units, local, c, unit)),
                                    T::one(),
                                    rng,
                                )
                            }
                        };
                    }
                }
                LayerKind::Product {
                    children,
                    kind: ProductKind::Hadamard,
                } => stack.extend(children.iter().map(|&c| (c, unit))),
                LayerKind::Product {
                    children,
                    kind: ProductKind::Kronecker,
                } => {
                    let mut rest = unit;
                    for &c in children.iter().rev() {
                        let k = self.layers[c].units;
                        stack.push((c, rest % k));
                        rest /= k;
                    }
                }
                LayerKind::Sum(s) => {
                    scratch.clear();
                    for &c in &s.children {
                        scratch.extend_from_slice(self.layer_values(values, c));
                    }
                    let row = &s.log_weights[unit * s.inputs..(unit + 1) * s.inputs];
                    let max = row
                        .iter()
                        .zip(&scratch)
                        .map(|(&w, &x)| w + x)
                        .fold(T::neg_infinity(), T::max);
                    let total: T = row
                        .iter()
                        .zip(&scratch)
                        .map(|(&w, &x)| (w + x - max).exp())
                        .sum();
                    let mut pick = draw(
                        row.iter().zip(&scratch).map(|(&w, &x)| (w + x - max).exp()),
                        total,
                        rng,
                    );
                    for &c in &s.children {
                        let k = self.layers[c].units;
                        if pick < k {
                            stack.push((c, pick));
                            break;
                        }
                        pick -= k;
                    }
                }
            }
        }
        if out.contains(&usize::MAX) {
            return Err(CircuitError::Structure(
                "sampling did not reach every variable; circuit is not valid".into(),
            ));
        }
        Ok(Assignment(out))
    }
}
