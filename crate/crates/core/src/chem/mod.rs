//! Heavy-atom molecules: SMILES text, graph tensors, valence rules and
//! generation metrics.

mod metrics;
mod smiles;

use std::collections::HashMap;

use thiserror::Error;

use crate::graphrep::{pad, DenseGraph, GraphError, GraphTensor};
use crate::invariance::Representation;

pub use metrics::{compute_metrics, Metrics};
pub use smiles::{canonical_smiles, parse_smiles, write_smiles};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChemError {
    #[error("position {pos}: aromatic `{found}` is not kekulized")]
    NotKekulized { pos: usize, found: String },
    #[error("position {pos}: unsupported `{found}`")]
    Unsupported { pos: usize, found: String },
    #[error("position {pos}: unknown symbol `{found}`")]
    Lexical { pos: usize, found: String },
    #[error("position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("{n} atoms do not fit in {m} slots")]
    Capacity { n: usize, m: usize },
    #[error("bond categories must be single, double and triple, found {0:?}")]
    EdgeAlphabet(Vec<String>),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T, E = ChemError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single = 1,
    Double = 2,
    Triple = 3,
}

impl BondOrder {
    pub fn order(self) -> u32 {
        self as u32
    }

    pub fn from_order(o: u32) -> Option<Self> {
        match o {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            _ => None,
        }
    }

    /// Edge category: single 0, double 1, triple 2.
    pub fn category(self) -> usize {
        self as usize - 1
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BondOrder::Single => "",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

/// Atoms as element symbols and bonds with `a < b`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Molecule {
    pub atoms: Vec<String>,
    pub bonds: Vec<Bond>,
}

impl Molecule {
    /// Adds a bond, rejecting self-bonds, duplicates and unknown atoms.
    pub fn add_bond(&mut self, i: usize, j: usize, order: BondOrder) -> Result<(), String> {
        if i == j {
            return Err(format!("atom {i} bonded to itself"));
        }
        if i.max(j) >= self.atoms.len() {
            return Err(format!("bond ({i}, {j}) refers to a missing atom"));
        }
        let (a, b) = (i.min(j), i.max(j));
        if self.bonds.iter().any(|x| x.a == a && x.b == b) {
            return Err(format!("atoms {a} and {b} bonded twice"));
        }
        self.bonds.push(Bond { a, b, order });
        Ok(())
    }

    /// Total bond order at each atom.
    pub fn bond_totals(&self) -> Vec<u32> {
        let mut t = vec![0; self.atoms.len()];
        for b in &self.bonds {
            t[b.a] += b.order.order();
            t[b.b] += b.order.order();
        }
        t
    }

    /// Same molecule with atom `p[k]` renumbered to `k`.
    pub fn reordered(&self, p: &[usize]) -> Molecule {
        let mut pos = vec![0; p.len()];
        for (k, &old) in p.iter().enumerate() {
            pos[old] = k;
        }
        let atoms = p.iter().map(|&old| self.atoms[old].clone()).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| {
                let (x, y) = (pos[b.a], pos[b.b]);
                Bond {
                    a: x.min(y),
                    b: x.max(y),
                    order: b.order,
                }
            })
            .collect();
        Molecule { atoms, bonds }
    }
}

/// Maximum total bond order per element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValenceTable(pub HashMap<String, u32>);

impl Default for ValenceTable {
    fn default() -> Self {
        ValenceTable(
            [("C", 4), ("N", 3), ("O", 2), ("F", 1)]
                .into_iter()
                .map(|(e, v)| (e.to_string(), v))
                .collect(),
        )
    }
}

impl ValenceTable {
    pub fn get(&self, element: &str) -> Result<u32> {
        self.0
            .get(element)
            .copied()
            .ok_or_else(|| ChemError::UnknownElement(element.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValenceReport {
    pub valid: bool,
    /// `(atom, total bond order - allowed)` for every atom over its limit.
    pub excess: Vec<(usize, u32)>,
}

pub fn check_valency(mol: &Molecule, vt: &ValenceTable) -> Result<ValenceReport> {
    let totals = mol.bond_totals();
    let mut excess = Vec::new();
    for (i, (el, &t)) in mol.atoms.iter().zip(&totals).enumerate() {
        let cap = vt.get(el)?;
        if t > cap {
            excess.push((i, t - cap));
        }
    }
    Ok(ValenceReport {
        valid: excess.is_empty(),
        excess,
    })
}

fn check_edges(repr: &Representation) -> Result<()> {
    if repr.r() != 3 {
        return Err(ChemError::EdgeAlphabet(repr.edge_names.clone()));
    }
    Ok(())
}

/// Atoms fill slots `0..n` in molecule order; bond order `o` becomes edge category `o - 1`.
pub fn mol_to_graph(mol: &Molecule, repr: &Representation) -> Result<GraphTensor> {
    check_edges(repr)?;
    let n = mol.atoms.len();
    if n > repr.m {
        return Err(ChemError::Capacity { n, m: repr.m });
    }
    let nodes = mol
        .atoms
        .iter()
        .map(|a| repr.node_category(a).ok_or_else(|| ChemError::UnknownElement(a.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mut edges = vec![repr.r(); n * n];
    for b in &mol.bonds {
        edges[b.a * n + b.b] = b.order.category();
        edges[b.b * n + b.a] = b.order.category();
    }
    Ok(pad(&DenseGraph { nodes, edges }, repr.m, repr.q(), repr.r())?)
}

/// Real slots in slot order become atoms; virtual slots are dropped.
pub fn graph_to_mol(g: &GraphTensor, repr: &Representation) -> Result<Molecule> {
    check_edges(repr)?;
    g.validate()?;
    let real = g.real_slots();
    let atoms = real
        .iter()
        .map(|&i| {
            repr.node_names
                .get(g.node(i))
                .cloned()
                .ok_or_else(|| ChemError::UnknownElement(g.node(i).to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bonds = Vec::new();
    for (a, &i) in real.iter().enumerate() {
        for (b, &j) in real.iter().enumerate().skip(a + 1) {
            if let Some(order) = BondOrder::from_order(g.edge(i, j) as u32 + 1) {
                bonds.push(Bond { a, b, order });
            }
        }
    }
    Ok(Molecule { atoms, bonds })
}

/// Lowers bond orders until every atom is within its valence.
///
/// Each step takes the atom with the largest excess (lowest slot on ties) and
/// lowers its highest-order bond (lowest neighbour slot on ties) by one:
/// triple to double, double to single, single to no bond.
pub fn correct(g: &GraphTensor, repr: &Representation, vt: &ValenceTable) -> Result<GraphTensor> {
    check_edges(repr)?;
    g.validate()?;
    let none = repr.r();
    let caps = g
        .nodes()
        .iter()
        .map(|&c| match repr.node_names.get(c) {
            Some(e) => vt.get(e),
            None => Ok(u32::MAX),
        })
        .collect::<Result<Vec<_>>>()?;
    let order = |c: usize| if c == none { 0 } else { c as u32 + 1 };
    let mut out = g.clone();
    loop {
        let totals: Vec<u32> = (0..g.m()).map(|i| (0..g.m()).map(|j| order(out.edge(i, j))).sum()).collect();
        let worst = (0..g.m())
            .filter(|&i| totals[i] > caps[i])
            .max_by(|&a, &b| (totals[a] - caps[a]).cmp(&(totals[b] - caps[b])).then(b.cmp(&a)));
        let Some(i) = worst else {
            return Ok(out);
        };
        let j = (0..g.m())
            .filter(|&j| out.edge(i, j) != none)
            .max_by(|&a, &b| order(out.edge(i, a)).cmp(&order(out.edge(i, b))).then(b.cmp(&a)))
            .expect("an atom over its valence has a bond");
        let lowered = match out.edge(i, j) {
            0 => none,
            c => c - 1,
        };
        out.set_edge(i, j, lowered);
    }
}
