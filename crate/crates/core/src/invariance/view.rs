use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ModelError, Representation, Result, Variant, EXACT_LIMIT};
use crate::circuit::{Assignment, CircuitError, Example, ExampleSource};
use crate::graphrep::{
    canonical_order, enumerate_tuples, factorial, flatten, permute, real_first, subgraph, GraphTensor, Permutation,
};

/// Training examples of one epoch as seen by the variant's circuit.
///
/// kary examples with fewer than `k` real nodes use tuples over the first `k`
/// slots after moving real nodes to the front, so they include virtual slots.
pub fn training_view(
    variant: Variant,
    repr: &Representation,
    graphs: &[GraphTensor],
    epoch_seed: u64,
) -> Result<Vec<Example>> {
    graphs.iter().try_for_each(|g| repr.check(g))?;
    match variant {
        Variant::None => Ok(graphs.iter().map(|g| Example::single(flatten(g))).collect()),
        Variant::Sort => Ok(graphs
            .par_iter()
            .map(|g| Example::single(flatten(&permute(g, &canonical_order(g)).expect("same size"))))
            .collect()),
        Variant::Rand { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
            graphs
                .iter()
                .map(|g| {
                    let mut p = g.real_slots();
                    p.shuffle(&mut rng);
                    p.extend((0..g.m()).filter(|&i| g.is_virtual(i)));
                    let p = Permutation::new(p)?;
                    Ok(Example::single(flatten(&permute(g, &p)?)))
                })
                .collect()
        }
        Variant::Exact => {
            if let Some(g) = graphs.iter().find(|g| g.n() > EXACT_LIMIT) {
                return Err(ModelError::Infeasible(format!(
                    "exact training on a {}-node graph needs {} terms per example (limit {EXACT_LIMIT} nodes)",
                    g.n(),
                    factorial(g.n())
                )));
            }
            graphs
                .par_iter()
                .map(|g| {
                    let base = permute(g, &real_first(g))?;
                    let terms = enumerate_tuples(g.n(), g.n())?
                        .map(|t| Ok(flatten(&permute(&base, &Permutation::new(t)?.extend_to(g.m()))?)))
                        .collect::<Result<Vec<Assignment>>>()?;
                    Ok(Example { terms })
                })
                .collect()
        }
        Variant::Kary { k } => graphs
            .par_iter()
            .map(|g| {
                let base = permute(g, &real_first(g))?;
                let pool = g.n().max(k);
                let terms = enumerate_tuples(pool, k)?
                    .map(|t| Ok(flatten(&subgraph(&base, &t)?)))
                    .collect::<Result<Vec<Assignment>>>()?;
                Ok(Example { terms })
            })
            .collect(),
    }
}

/// Epoch-by-epoch example source for [`crate::circuit::fit`].
///
/// Deterministic views are built once; the rand view is redrawn every epoch
/// from a seed derived from `view_seed` and the epoch index.
pub struct TrainingData<'a> {
    variant: Variant,
    repr: Representation,
    graphs: &'a [GraphTensor],
    view_seed: u64,
    cache: Option<Vec<Example>>,
}

impl<'a> TrainingData<'a> {
    pub fn new(variant: Variant, repr: &Representation, graphs: &'a [GraphTensor], view_seed: u64) -> Result<Self> {
        graphs.iter().try_for_each(|g| repr.check(g))?;
        Ok(Self {
            variant,
            repr: repr.clone(),
            graphs,
            view_seed,
            cache: None,
        })
    }

    pub fn epoch_seed(&self, epoch: usize) -> u64 {
        self.view_seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

impl ExampleSource for TrainingData<'_> {
    fn epoch_examples(&mut self, epoch: usize) -> Result<Vec<Example>, CircuitError> {
        let to_circuit = |e: ModelError| match e {
            ModelError::Circuit(c) => c,
            other => CircuitError::Training(other.to_string()),
        };
        if let Variant::Rand { .. } = self.variant {
            return training_view(self.variant, &self.repr, self.graphs, self.epoch_seed(epoch)).map_err(to_circuit);
        }
        if self.cache.is_none() {
            self.cache = Some(training_view(self.variant, &self.repr, self.graphs, self.view_seed).map_err(to_circuit)?);
        }
        Ok(self.cache.clone().expect("filled above"))
    }
}
