use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{GraphSPNModel, ModelError, Result, Variant, EXACT_LIMIT};
use crate::circuit::{CircuitError, Conditioned, QueryMask, VarState};
use crate::graphrep::{
    enumerate_tuples, factorial, node_var, permute, permute_mask, sample_permutations, GraphTensor, Permutation,
};
use crate::scalar::{log_sum_exp, Real};

enum Plan<'c, T> {
    /// Circuit sample taken as is.
    Direct(Conditioned<'c, T>),
    /// Circuit sample followed by a uniform relabeling of all slots.
    Shuffle(Conditioned<'c, T>),
    /// Evidence under several slot relabelings, one drawn per sample in
    /// proportion to the evidence mass it receives.
    Mixture {
        evidence: QueryMask,
        perms: Vec<Permutation>,
        cumulative: Vec<f64>,
    },
    /// Independent `k`-slot blocks laid out along the diagonal.
    Blocks(Conditioned<'c, T>),
}

/// Draws graphs from a model, optionally conditioned on evidence over the
/// flattened variables.
pub struct GraphSampler<'m, T> {
    model: &'m GraphSPNModel<T>,
    plan: Plan<'m, T>,
}

/// Slots not pinned to the virtual category by `evidence`, followed by the pinned ones.
pub(crate) fn active_first(evidence: &QueryMask, m: usize, q: usize) -> (usize, Vec<usize>) {
    let pinned = |i: usize| evidence.states()[node_var(m, i)] == VarState::Observed(q);
    let mut order: Vec<usize> = (0..m).filter(|&i| !pinned(i)).collect();
    let active = order.len();
    order.extend((0..m).filter(|&i| pinned(i)));
    (active, order)
}

/// Relabelings of the slots that permute the first `active` positions of
/// `order` among themselves: every ordering for exact, `n_perms` distinct
/// random ones (at most `active!`) for rand.
pub(crate) fn slot_permutations(
    variant: Variant,
    order: &[usize],
    active: usize,
    n_perms: Option<usize>,
    seed: u64,
) -> Result<Vec<Permutation>> {
    let inner: Vec<Permutation> = match variant {
        Variant::Exact => {
            if active > EXACT_LIMIT {
                return Err(ModelError::Infeasible(format!(
                    "exact invariance over {active} free slots needs {} circuit passes (limit {EXACT_LIMIT})",
                    factorial(active)
                )));
            }
            enumerate_tuples(active, active)?
                .map(|t| Permutation::new(t).expect("tuple"))
                .collect()
        }
        Variant::Rand { n_perms: default } => {
            let count = n_perms.unwrap_or(default);
            let count = (count as u128).min(factorial(active)) as usize;
            sample_permutations(active, count, seed)?
        }
        v => return Err(ModelError::Unsupported(format!("slot averaging for a {v} model"))),
    };
    Ok(inner
        .iter()
        .map(|p| {
            let full = p.extend_to(order.len());
            Permutation::new(full.iter().map(|&i| order[i]).collect()).expect("composition")
        })
        .collect())
}

impl<T: Real> GraphSPNModel<T> {
    /// Prepares repeated sampling. `perm_seed` selects the relabelings of a
    /// rand model conditioned on evidence.
    pub fn sampler(&self, evidence: Option<&QueryMask>, perm_seed: u64) -> Result<GraphSampler<'_, T>> {
        let m = self.repr.m;
        let plan = match (self.variant, evidence) {
            (Variant::Kary { k }, None) => Plan::Blocks(self.circuit.condition(&QueryMask::all_marginalized(k * (k + 1)))?),
            (Variant::Kary { .. }, Some(_)) => {
                return Err(ModelError::Unsupported(
                    "conditional sampling needs a circuit over whole graphs; kary circuits cover sub-graphs".into(),
                ))
            }
            (Variant::None | Variant::Sort, e) => Plan::Direct(
                self.circuit
                    .condition(e.unwrap_or(&QueryMask::all_marginalized(m * (m + 1))))?,
            ),
            (Variant::Exact | Variant::Rand { .. }, None) => {
                Plan::Shuffle(self.circuit.condition(&QueryMask::all_marginalized(m * (m + 1)))?)
            }
            (v, Some(e)) => {
                self.circuit.check_mask(e)?;
                let (active, order) = active_first(e, m, self.repr.q());
                let perms = slot_permutations(v, &order, active, None, perm_seed)?;
                let logs: Vec<T> = perms
                    .par_iter()
                    .map(|p| self.circuit.log_query(&permute_mask(e, m, p)?).map_err(ModelError::from))
                    .collect::<Result<_>>()?;
                let total = log_sum_exp(&logs);
                if total == T::neg_infinity() {
                    return Err(CircuitError::ImpossibleEvidence.into());
                }
                let mut acc = 0.0;
                let cumulative = logs
                    .iter()
                    .map(|&l| {
                        acc += (l - total).exp().to_f64().unwrap_or(0.0);
                        acc
                    })
                    .collect();
                Plan::Mixture {
                    evidence: e.clone(),
                    perms,
                    cumulative,
                }
            }
        };
        Ok(GraphSampler { model: self, plan })
    }

    pub fn sample_graph(&self, seed: u64, evidence: Option<&QueryMask>) -> Result<GraphTensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sampler(evidence, seed)?.draw(&mut rng)
    }

    /// `count` graphs; graph `i` uses stream `i` of a generator seeded with `seed`.
    pub fn sample_graphs(&self, count: usize, seed: u64, evidence: Option<&QueryMask>) -> Result<Vec<GraphTensor>> {
        self.sampler(evidence, seed)?.draw_many(count, seed)
    }
}

impl<T: Real> GraphSampler<'_, T> {
    fn tensor(&self, slots: usize, c: &Conditioned<'_, T>, rng: &mut (impl Rng + ?Sized)) -> Result<GraphTensor> {
        let a = c.draw(rng)?;
        Ok(GraphTensor::from_sample(slots, self.model.repr.q(), self.model.repr.r(), &a)?)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GraphTensor> {
        let repr = &self.model.repr;
        let m = repr.m;
        match &self.plan {
            Plan::Direct(c) => self.tensor(m, c, rng),
            Plan::Shuffle(c) => {
                let g = self.tensor(m, c, rng)?;
                let mut p: Vec<usize> = (0..m).collect();
                p.shuffle(rng);
                Ok(permute(&g, &Permutation::new(p)?)?)
            }
            Plan::Mixture {
                evidence,
                perms,
                cumulative,
            } => {
                let u: f64 = rng.gen::<f64>() * cumulative.last().copied().unwrap_or(1.0);
                let idx = cumulative.partition_point(|&c| c <= u).min(perms.len() - 1);
                let p = &perms[idx];
                let c = self.model.circuit.condition(&permute_mask(evidence, m, p)?)?;
                let y = self.tensor(m, &c, rng)?;
                Ok(permute(&y, &p.inverse())?)
            }
            Plan::Blocks(c) => {
                let Variant::Kary { k } = self.model.variant else {
                    unreachable!("block plan only for kary models")
                };
                let mut g = GraphTensor::empty(m, repr.q(), repr.r());
                for start in (0..m).step_by(k) {
                    let block = self.tensor(k, c, rng)?;
                    let size = k.min(m - start);
                    for i in 0..size {
                        g.set_node(start + i, block.node(i));
                        for j in 0..i {
                            let e = if block.is_virtual(i) || block.is_virtual(j) {
                                repr.r()
                            } else {
                                block.edge(i, j)
                            };
                            g.set_edge(start + i, start + j, e);
                        }
                    }
                }
                Ok(g)
            }
        }
    }

    pub fn draw_many(&self, count: usize, seed: u64) -> Result<Vec<GraphTensor>> {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                self.draw(&mut rng)
            })
            .collect()
    }
}
