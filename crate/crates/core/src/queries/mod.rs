//! Marginal and evidence queries over graphs, and conditional generation.
//!
//! A [`SubgraphQuery`] assigns every node and edge slot either an evidence
//! category or "marginal". Compiled to a [`QueryMask`], it selects the
//! indicator-product function whose expectation under the model is returned.

mod text;

use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{QueryMask, VarState};
use crate::graphrep::{canonical_order, edge_var, node_var, permute_mask, subgraph, GraphError, GraphTensor};
use crate::invariance::{active_first, slot_permutations, GraphSPNModel, ModelError, Representation, Variant};
use crate::scalar::{log_mean_exp, Real};

pub use text::{format_query, parse_query};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("edge ({i}, {j}) and ({j}, {i}) have different modes")]
    Conflict { i: usize, j: usize },
    #[error("out of range: {0}")]
    Range(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<GraphError> for QueryError {
    fn from(e: GraphError) -> Self {
        QueryError::Model(e.into())
    }
}

pub type Result<T, E = QueryError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Evidence(usize),
    Marginal,
}

impl Mode {
    pub fn observed(self) -> Option<usize> {
        match self {
            Mode::Evidence(c) => Some(c),
            Mode::Marginal => None,
        }
    }
}

impl From<Mode> for VarState {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Evidence(c) => VarState::Observed(c),
            Mode::Marginal => VarState::Marginalized,
        }
    }
}

/// Per-slot modes for an `m`-slot graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubgraphQuery {
    m: usize,
    nodes: Vec<Mode>,
    edges: Vec<Mode>,
}

impl SubgraphQuery {
    pub fn marginal(m: usize) -> Self {
        Self {
            m,
            nodes: vec![Mode::Marginal; m],
            edges: vec![Mode::Marginal; m * m],
        }
    }

    /// Everything observed as in `g`.
    pub fn evidence(g: &GraphTensor) -> Self {
        Self {
            m: g.m(),
            nodes: g.nodes().iter().map(|&c| Mode::Evidence(c)).collect(),
            edges: g.edges().iter().map(|&c| Mode::Evidence(c)).collect(),
        }
    }

    /// `g` observed on the slots in `slots` and the edges among them; the rest marginal.
    pub fn fragment(g: &GraphTensor, slots: &[usize]) -> Result<Self> {
        let mut q = Self::marginal(g.m());
        for &i in slots {
            q.set_node(i, Mode::Evidence(g.node(i)))?;
            for &j in slots {
                q.set_edge(i, j, Mode::Evidence(g.edge(i, j)))?;
            }
        }
        Ok(q)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn node(&self, i: usize) -> Mode {
        self.nodes[i]
    }

    pub fn edge(&self, i: usize, j: usize) -> Mode {
        self.edges[i * self.m + j]
    }

    fn slot(&self, i: usize) -> Result<()> {
        if i >= self.m {
            return Err(QueryError::Range(format!("slot {i} of {}", self.m)));
        }
        Ok(())
    }

    pub fn set_node(&mut self, i: usize, mode: Mode) -> Result<()> {
        self.slot(i)?;
        self.nodes[i] = mode;
        Ok(())
    }

    /// Sets both directions of the pair.
    pub fn set_edge(&mut self, i: usize, j: usize, mode: Mode) -> Result<()> {
        self.set_edge_directed(i, j, mode)?;
        self.set_edge_directed(j, i, mode)
    }

    pub fn set_edge_directed(&mut self, i: usize, j: usize, mode: Mode) -> Result<()> {
        self.slot(i)?;
        self.slot(j)?;
        self.edges[i * self.m + j] = mode;
        Ok(())
    }

    /// Marginalizes the nodes in `a` together with every edge incident to them.
    pub fn marginalize_nodes(&mut self, a: &[usize]) -> Result<()> {
        for &i in a {
            self.set_node(i, Mode::Marginal)?;
            for j in 0..self.m {
                self.set_edge(i, j, Mode::Marginal)?;
            }
        }
        Ok(())
    }

    /// Circuit mask over the `m(m+1)` flattened variables.
    pub fn compile(&self, repr: &Representation) -> Result<QueryMask> {
        if self.m != repr.m {
            return Err(QueryError::Range(format!("query over {} slots, model has {}", self.m, repr.m)));
        }
        let m = self.m;
        let mut mask = QueryMask::all_marginalized(m * (m + 1));
        for i in 0..m {
            if let Mode::Evidence(c) = self.nodes[i] {
                if c > repr.q() {
                    return Err(QueryError::Range(format!("node category {c} at slot {i}")));
                }
            }
            mask.set(node_var(m, i), self.nodes[i].into());
            for j in 0..m {
                let e = self.edge(i, j);
                if e != self.edge(j, i) {
                    return Err(QueryError::Conflict { i: i.min(j), j: i.max(j) });
                }
                if let Mode::Evidence(c) = e {
                    if c > repr.r() {
                        return Err(QueryError::Range(format!("edge category {c} at ({i}, {j})")));
                    }
                }
                mask.set(edge_var(m, i, j), e.into());
            }
        }
        Ok(mask)
    }
}

/// `log E[f]` and the number of circuit passes it averaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation<T> {
    pub log_value: T,
    pub terms: usize,
}

/// Options for slot-averaging variants; `n_perms` overrides a rand model's `N`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryOptions {
    pub n_perms: Option<usize>,
    pub seed: u64,
}

/// Expectation of the indicator product described by `q`.
///
/// exact and rand average the query over relabelings of the slots that are not
/// pinned virtual, moved to the front as in their density. sort queries are
/// read in canonical slot coordinates.
pub fn expectation<T: Real>(model: &GraphSPNModel<T>, q: &SubgraphQuery, opts: QueryOptions) -> Result<Expectation<T>> {
    let mask = q.compile(&model.repr)?;
    match model.variant {
        Variant::Kary { .. } => Err(ModelError::Unsupported(
            "kary models answer no marginal queries: averaging sub-graph circuits is not smooth over whole graphs"
                .into(),
        )
        .into()),
        Variant::None | Variant::Sort => Ok(Expectation {
            log_value: model.circuit.log_query(&mask).map_err(ModelError::from)?,
            terms: 1,
        }),
        v => {
            let m = model.repr.m;
            let (active, order) = active_first(&mask, m, model.repr.q());
            let perms = slot_permutations(v, &order, active, opts.n_perms, opts.seed)?;
            let logs: Vec<T> = perms
                .par_iter()
                .map(|p| {
                    let moved = permute_mask(&mask, m, p).map_err(ModelError::from)?;
                    Ok(model.circuit.log_query(&moved).map_err(ModelError::from)?)
                })
                .collect::<Result<_>>()?;
            Ok(Expectation {
                log_value: log_mean_exp(&logs),
                terms: perms.len(),
            })
        }
    }
}

/// Conditional samples and the slots their evidence was pinned to.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub graphs: Vec<GraphTensor>,
    pub slots: Vec<usize>,
    pub query: SubgraphQuery,
}

/// Samples `count` graphs agreeing with `known` on `slots` and the edges among
/// them. For sort models the fragment is canonically ordered and pinned to
/// the leading slots.
pub fn conditional_generate<T: Real>(
    model: &GraphSPNModel<T>,
    known: &GraphTensor,
    slots: &[usize],
    count: usize,
    seed: u64,
) -> Result<Conditional> {
    model.repr.check(known)?;
    known.validate()?;
    let (graph, slots) = if model.variant == Variant::Sort {
        let sub = subgraph(known, slots)?;
        let order = canonical_order(&sub);
        let mut g = GraphTensor::empty(known.m(), known.q(), known.r());
        for (a, &i) in order.iter().enumerate() {
            g.set_node(a, sub.node(i));
            for (b, &j) in order.iter().enumerate().take(a) {
                g.set_edge(a, b, sub.edge(i, j));
            }
        }
        (g, (0..slots.len()).collect::<Vec<_>>())
    } else {
        subgraph(known, slots)?;
        (known.clone(), slots.to_vec())
    };
    let query = SubgraphQuery::fragment(&graph, &slots)?;
    let mask = query.compile(&model.repr)?;
    let graphs = model.sample_graphs(count, seed, Some(&mask))?;
    Ok(Conditional { graphs, slots, query })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphrep::{permute, sample_permutations};
    use crate::invariance::tests::{path, tiny_model};

    #[test]
    fn full_evidence_equals_density() {
        let g = path(4, &[0, 1, 1]);
        for v in [Variant::None, Variant::Sort] {
            let model = tiny_model(v, 4, 3);
            let e = expectation(&model, &SubgraphQuery::evidence(&g), QueryOptions::default()).unwrap();
            assert_eq!(e.log_value, model.logp_none(&g).unwrap());
        }
        let model = tiny_model(Variant::Exact, 4, 3);
        let e = expectation(&model, &SubgraphQuery::evidence(&g), QueryOptions::default()).unwrap();
        assert!((e.log_value - model.logp_exact(&g).unwrap()).abs() < 1e-12);
        assert_eq!(e.terms, 6);
    }

    #[test]
    fn all_marginal_is_zero() {
        for v in [Variant::None, Variant::Rand { n_perms: 3 }] {
            let model = tiny_model(v, 3, 4);
            let e = expectation(&model, &SubgraphQuery::marginal(3), QueryOptions::default()).unwrap();
            assert!(e.log_value.abs() < 1e-12);
        }
    }

    #[test]
    fn marginal_at_slot_two() {
        let g = path(4, &[0, 1, 1, 0]);
        let mut q = SubgraphQuery::evidence(&g);
        q.marginalize_nodes(&[2]).unwrap();
        let mask = q.compile(&Representation::new(4, vec!["A".into(), "B".into()], vec!["x".into()]).unwrap()).unwrap();
        let marg: Vec<usize> = (0..20).filter(|&v| mask.states()[v] == VarState::Marginalized).collect();
        // X_2, the row A_2,* and the column A_*,2
        assert_eq!(marg, vec![3, 8, 10, 11, 12, 13, 14, 18]);
    }

    #[test]
    fn exact_queries_ignore_relabeling() {
        let model = tiny_model(Variant::Exact, 3, 5);
        let g = path(3, &[0, 1, 1]);
        let mut q = SubgraphQuery::evidence(&g);
        q.marginalize_nodes(&[1]).unwrap();
        let base = expectation(&model, &q, QueryOptions::default()).unwrap().log_value;
        for p in sample_permutations(3, 6, 0).unwrap() {
            let h = permute(&g, &p).unwrap();
            let mut qh = SubgraphQuery::evidence(&h);
            qh.marginalize_nodes(&[p.iter().position(|&x| x == 1).unwrap()]).unwrap();
            let v = expectation(&model, &qh, QueryOptions::default()).unwrap().log_value;
            assert!((v - base).abs() < 1e-9);
        }
    }

    #[test]
    fn kary_and_conflicts_are_rejected() {
        let model = tiny_model(Variant::Kary { k: 2 }, 3, 1);
        assert!(matches!(
            expectation(&model, &SubgraphQuery::marginal(3), QueryOptions::default()),
            Err(QueryError::Model(ModelError::Unsupported(_)))
        ));
        let mut q = SubgraphQuery::marginal(3);
        q.set_edge_directed(0, 1, Mode::Evidence(0)).unwrap();
        let repr = tiny_model(Variant::None, 3, 1).repr;
        assert_eq!(q.compile(&repr), Err(QueryError::Conflict { i: 0, j: 1 }));
    }

    #[test]
    fn conditional_generation_embeds_fragment() {
        let known = path(5, &[0, 1, 1, 0]);
        for v in [Variant::None, Variant::Sort, Variant::Exact] {
            let model = tiny_model(v, 5, 6);
            let out = conditional_generate(&model, &known, &[0, 1, 2], 8, 2).unwrap();
            assert_eq!(out.graphs.len(), 8);
            let frag = subgraph(&known, &[0, 1, 2]).unwrap();
            for g in &out.graphs {
                let got = subgraph(g, &out.slots).unwrap();
                assert_eq!(
                    permute(&got, &canonical_order(&got)).unwrap(),
                    permute(&frag, &canonical_order(&frag)).unwrap()
                );
            }
            let full = conditional_generate(&model, &known, &[0, 1, 2, 3, 4], 3, 2).unwrap();
            assert!(full.graphs.windows(2).all(|w| w[0] == w[1]));
        }
    }
}
