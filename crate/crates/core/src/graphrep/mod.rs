//! Fixed-size tensor representation of labeled graphs.
//!
//! A [`GraphTensor`] has `m` node slots. Each slot carries one of `q + 1`
//! node categories, index `q` marking a virtual (empty) slot, and each ordered
//! slot pair one of `r + 1` edge categories, index `r` meaning "no edge".
//! Flattening lists every node followed by its row of edges, giving the
//! `m(m+1)` variables a circuit is defined over.

mod canon;
mod perm;

use std::fmt::Write as _;

use thiserror::Error;

use crate::circuit::{Assignment, QueryMask, VarState, VariableSpec};

pub use canon::canonical_order;
pub use perm::{enumerate_tuples, factorial, sample_permutations, Permutation, Tuples};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph has {n} nodes but only {m} slots")]
    Capacity { n: usize, m: usize },
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("expected {expected} values, found {found}")]
    Length { expected: usize, found: usize },
    #[error("edge block is asymmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },
    #[error("not a permutation: {0}")]
    NotBijective(String),
    #[error("bad index tuple: {0}")]
    BadTuple(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Variable index of node `i` in the flattened order.
pub fn node_var(m: usize, i: usize) -> usize {
    i * (m + 1)
}

/// Variable index of edge `(i, j)` in the flattened order.
pub fn edge_var(m: usize, i: usize, j: usize) -> usize {
    i * (m + 1) + 1 + j
}

/// Category sizes of the `m(m+1)` flattened variables.
pub fn graph_spec(m: usize, q: usize, r: usize) -> VariableSpec {
    let mut sizes = Vec::with_capacity(m * (m + 1));
    for _ in 0..m {
        sizes.push(q + 1);
        sizes.extend(std::iter::repeat_n(r + 1, m));
    }
    VariableSpec::new(sizes).expect("graph spec needs m >= 1")
}

/// A graph without padding: `nodes[i] < q`, `edges` is `n × n` row-major over `r + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DenseGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

impl DenseGraph {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge(&self, i: usize, j: usize) -> usize {
        self.edges[i * self.nodes.len() + j]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GraphTensor {
    m: usize,
    q: usize,
    r: usize,
    node_cat: Vec<usize>,
    edge_cat: Vec<usize>,
}

impl GraphTensor {
    pub fn new(m: usize, q: usize, r: usize, node_cat: Vec<usize>, edge_cat: Vec<usize>) -> Result<Self> {
        let g = Self::new_unchecked(m, q, r, node_cat, edge_cat)?;
        g.validate()?;
        Ok(g)
    }

    /// Shape-checked but otherwise unvalidated tensor.
    pub fn new_unchecked(m: usize, q: usize, r: usize, node_cat: Vec<usize>, edge_cat: Vec<usize>) -> Result<Self> {
        if node_cat.len() != m {
            return Err(GraphError::Length {
                expected: m,
                found: node_cat.len(),
            });
        }
        if edge_cat.len() != m * m {
            return Err(GraphError::Length {
                expected: m * m,
                found: edge_cat.len(),
            });
        }
        Ok(Self {
            m,
            q,
            r,
            node_cat,
            edge_cat,
        })
    }

    /// Tensor with every slot virtual.
    pub fn empty(m: usize, q: usize, r: usize) -> Self {
        Self {
            m,
            q,
            r,
            node_cat: vec![q; m],
            edge_cat: vec![r; m * m],
        }
    }

    /// Checks categories, symmetry, the no-edge diagonal and virtual isolation.
    pub fn validate(&self) -> Result<()> {
        let m = self.m;
        if let Some(&c) = self.node_cat.iter().find(|&&c| c > self.q) {
            return Err(GraphError::Integrity(format!("node category {c} > {}", self.q)));
        }
        if let Some(&c) = self.edge_cat.iter().find(|&&c| c > self.r) {
            return Err(GraphError::Integrity(format!("edge category {c} > {}", self.r)));
        }
        for i in 0..m {
            if self.edge(i, i) != self.r {
                return Err(GraphError::Integrity(format!("self loop at slot {i}")));
            }
            for j in 0..i {
                if self.edge(i, j) != self.edge(j, i) {
                    return Err(GraphError::Asymmetric { i, j });
                }
                if self.edge(i, j) != self.r && (self.is_virtual(i) || self.is_virtual(j)) {
                    return Err(GraphError::Integrity(format!(
                        "edge ({j}, {i}) touches a virtual slot"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Number of real (non-virtual) slots.
    pub fn n(&self) -> usize {
        self.node_cat.iter().filter(|&&c| c != self.q).count()
    }

    pub fn node(&self, i: usize) -> usize {
        self.node_cat[i]
    }

    pub fn edge(&self, i: usize, j: usize) -> usize {
        self.edge_cat[i * self.m + j]
    }

    pub fn nodes(&self) -> &[usize] {
        &self.node_cat
    }

    pub fn edges(&self) -> &[usize] {
        &self.edge_cat
    }

    pub fn is_virtual(&self, i: usize) -> bool {
        self.node_cat[i] == self.q
    }

    pub fn real_slots(&self) -> Vec<usize> {
        (0..self.m).filter(|&i| !self.is_virtual(i)).collect()
    }

    pub fn set_node(&mut self, i: usize, c: usize) {
        self.node_cat[i] = c;
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set_edge(&mut self, i: usize, j: usize, c: usize) {
        self.edge_cat[i * self.m + j] = c;
        self.edge_cat[j * self.m + i] = c;
    }

    /// Tensor from a raw circuit sample: the lower triangle is mirrored onto
    /// the upper one, the diagonal is cleared, and edges touching virtual
    /// slots are removed.
    pub fn from_sample(m: usize, q: usize, r: usize, a: &Assignment) -> Result<Self> {
        if a.len() != m * (m + 1) {
            return Err(GraphError::Length {
                expected: m * (m + 1),
                found: a.len(),
            });
        }
        let mut g = Self::empty(m, q, r);
        for i in 0..m {
            g.node_cat[i] = a[node_var(m, i)].min(q);
        }
        for i in 0..m {
            for j in 0..i {
                let c = a[edge_var(m, i, j)].min(r);
                let c = if g.is_virtual(i) || g.is_virtual(j) { r } else { c };
                g.set_edge(i, j, c);
            }
        }
        Ok(g)
    }

    /// Graphviz rendering; virtual slots are omitted.
    pub fn to_dot(&self, node_names: &[String], edge_names: &[String]) -> String {
        let mut out = String::from("graph G {\n");
        let name = |names: &[String], c: usize| names.get(c).cloned().unwrap_or_else(|| c.to_string());
        for i in self.real_slots() {
            let _ = writeln!(out, "  n{i} [label=\"{}\"];", name(node_names, self.node(i)));
        }
        for i in self.real_slots() {
            for j in self.real_slots().into_iter().filter(|&j| j > i) {
                let e = self.edge(i, j);
                if e != self.r {
                    let _ = writeln!(out, "  n{i} -- n{j} [label=\"{}\"];", name(edge_names, e));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Places `graph` in slots `0..n` and fills the rest with virtual nodes.
pub fn pad(graph: &DenseGraph, m: usize, q: usize, r: usize) -> Result<GraphTensor> {
    let n = graph.n();
    if n > m {
        return Err(GraphError::Capacity { n, m });
    }
    if graph.edges.len() != n * n {
        return Err(GraphError::Length {
            expected: n * n,
            found: graph.edges.len(),
        });
    }
    if let Some(&c) = graph.nodes.iter().find(|&&c| c >= q) {
        return Err(GraphError::Integrity(format!("node category {c} is not a real node")));
    }
    let mut g = GraphTensor::empty(m, q, r);
    g.node_cat[..n].copy_from_slice(&graph.nodes);
    for i in 0..n {
        for j in 0..n {
            g.edge_cat[i * m + j] = graph.edge(i, j);
        }
    }
    g.validate()?;
    Ok(g)
}

/// Drops virtual slots, keeping the order of the real ones.
pub fn unpad(g: &GraphTensor) -> Result<DenseGraph> {
    g.validate()?;
    let real = g.real_slots();
    let nodes = real.iter().map(|&i| g.node(i)).collect();
    let mut edges = Vec::with_capacity(real.len() * real.len());
    for &i in &real {
        for &j in &real {
            edges.push(g.edge(i, j));
        }
    }
    Ok(DenseGraph { nodes, edges })
}

/// Variables in the order `X_1, A_1, ..., X_m, A_m`.
pub fn flatten(g: &GraphTensor) -> Assignment {
    let m = g.m;
    let mut out = Vec::with_capacity(m * (m + 1));
    for i in 0..m {
        out.push(g.node_cat[i]);
        out.extend_from_slice(&g.edge_cat[i * m..(i + 1) * m]);
    }
    Assignment(out)
}

/// Inverse of [`flatten`]; rejects asymmetric edge blocks and other invariant violations.
pub fn unflatten(a: &Assignment, m: usize, q: usize, r: usize) -> Result<GraphTensor> {
    if a.len() != m * (m + 1) {
        return Err(GraphError::Length {
            expected: m * (m + 1),
            found: a.len(),
        });
    }
    let mut node_cat = Vec::with_capacity(m);
    let mut edge_cat = Vec::with_capacity(m * m);
    for row in a.chunks(m + 1) {
        node_cat.push(row[0]);
        edge_cat.extend_from_slice(&row[1..]);
    }
    GraphTensor::new(m, q, r, node_cat, edge_cat)
}

/// Relabels slots: slot `i` of the result is slot `p[i]` of `g`.
pub fn permute(g: &GraphTensor, p: &Permutation) -> Result<GraphTensor> {
    if p.len() != g.m {
        return Err(GraphError::NotBijective(format!(
            "permutation of length {} applied to {} slots",
            p.len(),
            g.m
        )));
    }
    let m = g.m;
    let node_cat = p.iter().map(|&s| g.node_cat[s]).collect();
    let mut edge_cat = Vec::with_capacity(m * m);
    for &s in p.iter() {
        for &t in p.iter() {
            edge_cat.push(g.edge(s, t));
        }
    }
    Ok(GraphTensor {
        m,
        q: g.q,
        r: g.r,
        node_cat,
        edge_cat,
    })
}

/// Applies the slot relabeling of [`permute`] to a mask over the flattened variables.
pub fn permute_mask(mask: &QueryMask, m: usize, p: &Permutation) -> Result<QueryMask> {
    if mask.len() != m * (m + 1) || p.len() != m {
        return Err(GraphError::Length {
            expected: m * (m + 1),
            found: mask.len(),
        });
    }
    let old = mask.states();
    let mut out: Vec<VarState> = Vec::with_capacity(old.len());
    for &s in p.iter() {
        out.push(old[node_var(m, s)]);
        out.extend(p.iter().map(|&t| old[edge_var(m, s, t)]));
    }
    Ok(QueryMask(out))
}

/// Ordering that moves real slots to the front, both groups keeping their order.
pub fn real_first(g: &GraphTensor) -> Permutation {
    let mut p = g.real_slots();
    p.extend((0..g.m).filter(|&i| g.is_virtual(i)));
    Permutation::new(p).expect("slots partition 0..m")
}

/// Induced sub-graph on the ordered slot tuple `t`.
pub fn subgraph(g: &GraphTensor, t: &[usize]) -> Result<GraphTensor> {
    let mut seen = vec![false; g.m];
    for &i in t {
        if i >= g.m {
            return Err(GraphError::BadTuple(format!("slot {i} out of range")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(GraphError::BadTuple(format!("slot {i} repeated")));
        }
    }
    let k = t.len();
    let node_cat = t.iter().map(|&i| g.node_cat[i]).collect();
    let mut edge_cat = Vec::with_capacity(k * k);
    for &i in t {
        for &j in t {
            edge_cat.push(g.edge(i, j));
        }
    }
    Ok(GraphTensor {
        m: k,
        q: g.q,
        r: g.r,
        node_cat,
        edge_cat,
    })
}
