//! Permutation-invariant graph distributions built on a slot-ordered circuit.

mod sampler;
mod view;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{build_circuit, fit, Circuit, CircuitError, FitReport, StructureConfig, TrainConfig, VariableSpec};
use crate::graphrep::{
    canonical_order, enumerate_tuples, factorial, flatten, graph_spec, permute, real_first, sample_permutations,
    subgraph, GraphError, GraphTensor, Permutation,
};
use crate::scalar::{log_mean_exp, Real};

pub(crate) use sampler::{active_first, slot_permutations};
pub use sampler::GraphSampler;
pub use view::{training_view, TrainingData};

/// Largest real-node count for which all `n!` orderings are enumerated.
pub const EXACT_LIMIT: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("representation mismatch: {0}")]
    Representation(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    None,
    Exact,
    Sort,
    Kary { k: usize },
    Rand { n_perms: usize },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::Exact => "exact",
            Variant::Sort => "sort",
            Variant::Kary { .. } => "kary",
            Variant::Rand { .. } => "rand",
        }
    }

    /// `k` for kary, `N` for rand.
    pub fn param(&self) -> Option<usize> {
        match *self {
            Variant::Kary { k } => Some(k),
            Variant::Rand { n_perms } => Some(n_perms),
            _ => None,
        }
    }

    pub fn from_parts(name: &str, param: Option<usize>) -> Result<Self> {
        let need = |p: Option<usize>| match p {
            Some(v) if v >= 1 => Ok(v),
            _ => Err(ModelError::Representation(format!("variant `{name}` needs a positive parameter"))),
        };
        match name {
            "none" => Ok(Variant::None),
            "exact" => Ok(Variant::Exact),
            "sort" => Ok(Variant::Sort),
            "kary" => Ok(Variant::Kary { k: need(param)? }),
            "rand" => Ok(Variant::Rand { n_perms: need(param)? }),
            _ => Err(ModelError::Representation(format!("unknown variant `{name}`"))),
        }
    }

    /// Slot count of the circuit scope for graphs with `m` slots.
    pub fn circuit_slots(&self, m: usize) -> usize {
        match *self {
            Variant::Kary { k } => k,
            _ => m,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param() {
            Some(p) => write!(f, "{}:{p}", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// Accepts `none`, `exact`, `sort`, `kary:K` and `rand:N`.
impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((name, p)) => {
                let p = p
                    .parse()
                    .map_err(|_| ModelError::Representation(format!("bad variant parameter in `{s}`")))?;
                Variant::from_parts(name, Some(p))
            }
            None => Variant::from_parts(s, None),
        }
    }
}

/// Slot count and category names of the graph tensors a model is defined over.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Representation {
    pub m: usize,
    pub node_names: Vec<String>,
    pub edge_names: Vec<String>,
}

impl Representation {
    pub fn new(m: usize, node_names: Vec<String>, edge_names: Vec<String>) -> Result<Self> {
        if m == 0 || node_names.is_empty() || edge_names.is_empty() {
            return Err(ModelError::Representation(
                "need at least one slot, one node category and one edge category".into(),
            ));
        }
        let mut all: Vec<&String> = node_names.iter().chain(&edge_names).collect();
        all.sort();
        if all.windows(2).any(|w| w[0] == w[1]) || all.iter().any(|s| s.is_empty() || s.contains(char::is_whitespace))
        {
            return Err(ModelError::Representation("category names must be distinct single tokens".into()));
        }
        Ok(Self {
            m,
            node_names,
            edge_names,
        })
    }

    /// Heavy-atom molecules: C, N, O, F with single, double and triple bonds.
    pub fn molecular(m: usize) -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        Self::new(m, s(&["C", "N", "O", "F"]), s(&["single", "double", "triple"])).expect("valid names")
    }

    pub fn q(&self) -> usize {
        self.node_names.len()
    }

    pub fn r(&self) -> usize {
        self.edge_names.len()
    }

    pub fn spec(&self, slots: usize) -> VariableSpec {
        graph_spec(slots, self.q(), self.r())
    }

    pub fn node_category(&self, name: &str) -> Option<usize> {
        self.node_names.iter().position(|n| n == name)
    }

    pub fn edge_category(&self, name: &str) -> Option<usize> {
        self.edge_names.iter().position(|n| n == name)
    }

    pub fn check(&self, g: &GraphTensor) -> Result<()> {
        if g.m() != self.m || g.q() != self.q() || g.r() != self.r() {
            return Err(ModelError::Representation(format!(
                "graph has (m, q, r) = ({}, {}, {}), model expects ({}, {}, {})",
                g.m(),
                g.q(),
                g.r(),
                self.m,
                self.q(),
                self.r()
            )));
        }
        Ok(())
    }
}

/// A circuit over flattened graph tensors plus the operator making it invariant.
#[derive(Debug, Clone)]
pub struct GraphSPNModel<T> {
    pub circuit: Circuit<T>,
    pub variant: Variant,
    pub repr: Representation,
    pub structure: StructureConfig,
}

impl<T: Real> GraphSPNModel<T> {
    pub fn new(repr: Representation, variant: Variant, structure: StructureConfig) -> Result<Self> {
        if let Variant::Kary { k } = variant {
            if k > repr.m {
                return Err(ModelError::Infeasible(format!("k = {k} exceeds the {} slots", repr.m)));
            }
        }
        let spec = repr.spec(variant.circuit_slots(repr.m));
        let circuit = build_circuit(&spec, &structure)?;
        Ok(Self {
            circuit,
            variant,
            repr,
            structure,
        })
    }

    pub fn from_parts(
        circuit: Circuit<T>,
        variant: Variant,
        repr: Representation,
        structure: StructureConfig,
    ) -> Result<Self> {
        let expected = repr.spec(variant.circuit_slots(repr.m));
        if circuit.spec() != &expected {
            return Err(ModelError::Representation(format!(
                "circuit has {} variables, variant {variant} over {} slots needs {}",
                circuit.var_count(),
                repr.m,
                expected.var_count()
            )));
        }
        Ok(Self {
            circuit,
            variant,
            repr,
            structure,
        })
    }

    fn eval_all(&self, tensors: Vec<GraphTensor>) -> Result<T> {
        let lls: Vec<T> = tensors
            .par_iter()
            .map(|t| self.circuit.log_density(&flatten(t)))
            .collect::<Result<_, _>>()?;
        Ok(log_mean_exp(&lls))
    }

    fn full_scope(&self) -> Result<()> {
        if let Variant::Kary { k } = self.variant {
            return Err(ModelError::Unsupported(format!(
                "the circuit of a kary model covers {k} slots, not whole graphs"
            )));
        }
        Ok(())
    }

    /// `log p_spn(flatten(g))`.
    pub fn logp_none(&self, g: &GraphTensor) -> Result<T> {
        self.repr.check(g)?;
        self.full_scope()?;
        Ok(self.circuit.log_density(&flatten(g))?)
    }

    /// Average over every ordering of the real nodes.
    pub fn logp_exact(&self, g: &GraphTensor) -> Result<T> {
        self.repr.check(g)?;
        self.full_scope()?;
        let n = g.n();
        if n > EXACT_LIMIT {
            return Err(ModelError::Infeasible(format!(
                "exact invariance over {n} nodes needs {n}! = {} circuit passes (limit {EXACT_LIMIT} nodes)",
                factorial(n)
            )));
        }
        let base = permute(g, &real_first(g))?;
        let tensors = enumerate_tuples(n, n)?
            .map(|t| permute(&base, &Permutation::new(t).expect("tuple").extend_to(g.m())))
            .collect::<Result<Vec<_>, _>>()?;
        self.eval_all(tensors)
    }

    /// Density of the canonically ordered tensor.
    pub fn logp_sort(&self, g: &GraphTensor) -> Result<T> {
        self.repr.check(g)?;
        self.full_scope()?;
        let c = permute(g, &canonical_order(g))?;
        Ok(self.circuit.log_density(&flatten(&c))?)
    }

    /// Average over all ordered `k`-node induced sub-graphs of the real nodes.
    pub fn logp_kary(&self, g: &GraphTensor) -> Result<T> {
        self.repr.check(g)?;
        let Variant::Kary { k } = self.variant else {
            return Err(ModelError::Unsupported(format!("kary score on a {} model", self.variant)));
        };
        let n = g.n();
        if k > n {
            return Err(ModelError::Infeasible(format!("k = {k} exceeds the {n} real nodes")));
        }
        let real = g.real_slots();
        let tensors = enumerate_tuples(n, k)?
            .map(|t| subgraph(g, &t.iter().map(|&i| real[i]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>, _>>()?;
        self.eval_all(tensors)
    }

    /// Average over `n_perms` distinct random orderings of the real nodes.
    pub fn logp_rand(&self, g: &GraphTensor, n_perms: usize, seed: u64) -> Result<T> {
        self.repr.check(g)?;
        self.full_scope()?;
        let n = g.n();
        if n_perms as u128 > factorial(n) {
            return Err(ModelError::Infeasible(format!(
                "{n_perms} distinct orderings requested for {n} nodes ({n}! = {})",
                factorial(n)
            )));
        }
        let base = permute(g, &real_first(g))?;
        let tensors = sample_permutations(n, n_perms, seed)?
            .iter()
            .map(|p| permute(&base, &p.extend_to(g.m())))
            .collect::<Result<Vec<_>, _>>()?;
        self.eval_all(tensors)
    }

    /// Score of `g` under the model's own variant; `seed` only matters for rand.
    pub fn log_score(&self, g: &GraphTensor, seed: u64) -> Result<T> {
        match self.variant {
            Variant::None => self.logp_none(g),
            Variant::Exact => self.logp_exact(g),
            Variant::Sort => self.logp_sort(g),
            Variant::Kary { .. } => self.logp_kary(g),
            Variant::Rand { n_perms } => self.logp_rand(g, n_perms, seed),
        }
    }

    /// Trains the circuit on the variant's view of `graphs`.
    pub fn fit(&mut self, graphs: &[GraphTensor], cfg: &TrainConfig, view_seed: u64) -> Result<FitReport> {
        let mut data = TrainingData::new(self.variant, &self.repr, graphs, view_seed)?;
        Ok(fit(&mut self.circuit, &mut data, cfg)?)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graphrep::{pad, DenseGraph};

    pub(crate) fn tiny_model(variant: Variant, m: usize, seed: u64) -> GraphSPNModel<f64> {
        let repr = Representation::new(m, vec!["A".into(), "B".into()], vec!["x".into()]).unwrap();
        let cfg = StructureConfig {
            n_layers: 2,
            n_sum: 3,
            n_input: 3,
            n_repetitions: 2,
            structure_seed: seed,
        };
        let mut model = GraphSPNModel::new(repr, variant, cfg).unwrap();
        let p: Vec<f64> = (0..model.circuit.param_count())
            .map(|i| (((i as u64 * 2654435761 + seed * 97) % 1000) as f64 / 250.0) - 2.0)
            .collect();
        model.circuit.set_params(&p).unwrap();
        model
    }

    pub(crate) fn path(m: usize, labels: &[usize]) -> GraphTensor {
        let n = labels.len();
        let mut edges = vec![1; n * n];
        for i in 1..n {
            edges[i * n + i - 1] = 0;
            edges[(i - 1) * n + i] = 0;
        }
        pad(
            &DenseGraph {
                nodes: labels.to_vec(),
                edges,
            },
            m,
            2,
            1,
        )
        .unwrap()
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("kary:2".parse::<Variant>().unwrap(), Variant::Kary { k: 2 });
        assert_eq!("rand:20".parse::<Variant>().unwrap(), Variant::Rand { n_perms: 20 });
        assert_eq!("sort".parse::<Variant>().unwrap(), Variant::Sort);
        assert!("kary".parse::<Variant>().is_err());
        assert!("rand:0".parse::<Variant>().is_err());
        assert_eq!(Variant::Kary { k: 3 }.to_string(), "kary:3");
    }

    #[test]
    fn exact_with_one_node_is_none() {
        let m = tiny_model(Variant::Exact, 3, 1);
        let g = path(3, &[1]);
        assert_eq!(m.logp_exact(&g).unwrap(), m.logp_none(&g).unwrap());
    }

    #[test]
    fn exact_two_nodes_is_two_term_mean() {
        let m = tiny_model(Variant::Exact, 3, 2);
        let g = path(3, &[0, 1]);
        let swapped = permute(&g, &Permutation::new(vec![1, 0, 2]).unwrap()).unwrap();
        let a = m.logp_none(&g).unwrap().exp();
        let b = m.logp_none(&swapped).unwrap().exp();
        assert!((m.logp_exact(&g).unwrap() - ((a + b) / 2.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn none_is_permutation_sensitive() {
        let m = tiny_model(Variant::None, 3, 3);
        let g = path(3, &[0, 1, 1]);
        let base = m.logp_none(&g).unwrap();
        let differs = enumerate_tuples(3, 3)
            .unwrap()
            .any(|t| m.logp_none(&permute(&g, &Permutation::new(t).unwrap()).unwrap()).unwrap() != base);
        assert!(differs);
    }

    #[test]
    fn sort_uses_one_pass_and_matches_none_on_canonical_input() {
        let m = tiny_model(Variant::Sort, 4, 4);
        let g = path(4, &[0, 1, 0]);
        let c = permute(&g, &canonical_order(&g)).unwrap();
        m.circuit.reset_pass_count();
        let v = m.logp_sort(&g).unwrap();
        assert_eq!(m.circuit.pass_count(), 1);
        assert_eq!(v, m.logp_none(&c).unwrap());
    }

    #[test]
    fn kary_with_k_equal_n_is_exact() {
        let g = path(3, &[0, 1, 1]);
        let kary = tiny_model(Variant::Kary { k: 3 }, 3, 5);
        let exact = GraphSPNModel::from_parts(kary.circuit.clone(), Variant::Exact, kary.repr.clone(), kary.structure)
            .unwrap();
        assert!((kary.logp_kary(&g).unwrap() - exact.logp_exact(&g).unwrap()).abs() < 1e-12);
        assert!(matches!(kary.logp_kary(&path(3, &[0, 1])), Err(ModelError::Infeasible(_))));
    }

    #[test]
    fn rand_counts_and_limits() {
        let m = tiny_model(Variant::Rand { n_perms: 2 }, 3, 6);
        let g = path(3, &[0, 1, 1]);
        m.circuit.reset_pass_count();
        m.logp_rand(&g, 4, 9).unwrap();
        assert_eq!(m.circuit.pass_count(), 4);
        assert!(matches!(m.logp_rand(&g, 7, 9), Err(ModelError::Infeasible(_))));
        assert!((m.logp_rand(&g, 6, 1).unwrap() - m.logp_exact(&g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn exact_guard_names_the_cost() {
        let m = tiny_model(Variant::Exact, 9, 1);
        let g = path(9, &[0; 9]);
        match m.logp_exact(&g) {
            Err(ModelError::Infeasible(msg)) => assert!(msg.contains("362880")),
            other => panic!("{other:?}"),
        }
    }
}
