//! Kekulized SMILES subset.
//!
//! ```text
//! smiles    ::= chain ( "." chain )*
//! chain     ::= atom ( bond? ( atom | ring ) | branch )*
//! branch    ::= "(" bond? chain ")"
//! ring      ::= digit | "%" digit digit
//! atom      ::= "B" | "Br" | "C" | "Cl" | "N" | "O" | "P" | "S" | "F" | "I"
//! bond      ::= "-" | "=" | "#"
//! ```
//! Hydrogens stay implicit. Aromatic lowercase atoms and `:` bonds are
//! rejected as not kekulized; bracket atoms, charges and stereo marks are
//! rejected as unsupported.

use std::collections::HashMap;

use super::{BondOrder, ChemError, Molecule, Result};
use crate::graphrep::{canonical_order, permute, GraphTensor};

struct OpenRing {
    atom: usize,
    order: Option<BondOrder>,
}

fn syntax(pos: usize, msg: impl Into<String>) -> ChemError {
    ChemError::Syntax { pos, msg: msg.into() }
}

pub fn parse_smiles(text: &str) -> Result<Molecule> {
    let bytes = text.trim_end().as_bytes();
    let mut mol = Molecule::default();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondOrder, usize)> = None;
    let mut branches: Vec<(usize, usize)> = Vec::new();
    let mut rings: HashMap<u32, OpenRing> = HashMap::new();
    let mut pos = 0;

    let bond_to = |mol: &mut Molecule, a: usize, b: usize, order: BondOrder, at: usize| {
        mol.add_bond(a, b, order).map_err(|m| syntax(at, m))
    };

    while pos < bytes.len() {
        let ch = bytes[pos] as char;
        let start = pos;
        match ch {
            'B' | 'C' | 'N' | 'O' | 'P' | 'S' | 'F' | 'I' => {
                let two = match (ch, bytes.get(pos + 1).map(|&b| b as char)) {
                    ('B', Some('r')) => Some("Br"),
                    ('C', Some('l')) => Some("Cl"),
                    _ => None,
                };
                let symbol = match two {
                    Some(s) => {
                        pos += 2;
                        s.to_string()
                    }
                    None => {
                        pos += 1;
                        ch.to_string()
                    }
                };
                let idx = mol.atoms.len();
                mol.atoms.push(symbol);
                if let Some(p) = prev {
                    let order = pending.take().map_or(BondOrder::Single, |(o, _)| o);
                    bond_to(&mut mol, p, idx, order, start)?;
                }
                prev = Some(idx);
                continue;
            }
            'b' | 'c' | 'n' | 'o' | 'p' | 's' | ':' => {
                return Err(ChemError::NotKekulized {
                    pos,
                    found: ch.to_string(),
                })
            }
            '[' => {
                let end = text[pos..].find(']').map_or(text.len(), |e| pos + e + 1);
                return Err(ChemError::Unsupported {
                    pos,
                    found: text[pos..end].to_string(),
                });
            }
            '/' | '\\' | '@' | '+' | '$' | '*' => {
                return Err(ChemError::Unsupported {
                    pos,
                    found: ch.to_string(),
                })
            }
            '-' | '=' | '#' => {
                if prev.is_none() {
                    return Err(syntax(pos, "bond without a preceding atom"));
                }
                if pending.is_some() {
                    return Err(syntax(pos, "two bond symbols in a row"));
                }
                let order = match ch {
                    '-' => BondOrder::Single,
                    '=' => BondOrder::Double,
                    _ => BondOrder::Triple,
                };
                pending = Some((order, pos));
            }
            '(' => {
                let Some(p) = prev else {
                    return Err(syntax(pos, "branch without a preceding atom"));
                };
                if let Some((_, at)) = pending {
                    return Err(syntax(at, "bond before a branch"));
                }
                branches.push((p, pos));
            }
            ')' => {
                if let Some((_, at)) = pending {
                    return Err(syntax(at, "dangling bond"));
                }
                let Some((p, _)) = branches.pop() else {
                    return Err(syntax(pos, "unmatched `)`"));
                };
                prev = Some(p);
            }
            '0'..='9' | '%' => {
                let number = if ch == '%' {
                    let digits = text.get(pos + 1..pos + 3).filter(|d| d.bytes().all(|b| b.is_ascii_digit()));
                    let Some(d) = digits else {
                        return Err(syntax(pos, "`%` must be followed by two digits"));
                    };
                    pos += 2;
                    d.parse().expect("two digits")
                } else {
                    ch.to_digit(10).expect("digit")
                };
                let Some(p) = prev else {
                    return Err(syntax(start, "ring bond without a preceding atom"));
                };
                let here = pending.take();
                match rings.remove(&number) {
                    Some(open) => {
                        let order = match (open.order, here) {
                            (Some(a), Some((b, at))) if a != b => {
                                return Err(syntax(at, format!("ring {number} closed with a different bond")))
                            }
                            (Some(a), _) => a,
                            (None, Some((b, _))) => b,
                            (None, None) => BondOrder::Single,
                        };
                        bond_to(&mut mol, open.atom, p, order, start)?;
                    }
                    None => {
                        rings.insert(
                            number,
                            OpenRing {
                                atom: p,
                                order: here.map(|(o, _)| o),
                            },
                        );
                    }
                }
            }
            '.' => {
                if let Some((_, at)) = pending {
                    return Err(syntax(at, "dangling bond"));
                }
                prev = None;
            }
            _ => {
                return Err(ChemError::Lexical {
                    pos,
                    found: ch.to_string(),
                })
            }
        }
        pos += 1;
    }
    if let Some((_, at)) = pending {
        return Err(syntax(at, "dangling bond"));
    }
    if let Some(&(_, at)) = branches.last() {
        return Err(syntax(at, "unclosed branch"));
    }
    if let Some(n) = rings.keys().min() {
        return Err(syntax(bytes.len(), format!("ring {n} never closed")));
    }
    Ok(mol)
}

struct Writer<'a> {
    atoms: Vec<&'a str>,
    /// Neighbours `(atom, order)` in canonical rank order.
    adj: Vec<Vec<(usize, BondOrder)>>,
    seen: Vec<bool>,
    rank_in_dfs: Vec<usize>,
    children: Vec<Vec<(usize, BondOrder)>>,
    /// Ring bonds: `(partner, order, opens here)`.
    rings: Vec<Vec<(usize, BondOrder, bool)>>,
    visits: usize,
}

impl Writer<'_> {
    fn explore(&mut self, v: usize, parent: Option<usize>) {
        self.seen[v] = true;
        self.rank_in_dfs[v] = self.visits;
        self.visits += 1;
        for k in 0..self.adj[v].len() {
            let (u, o) = self.adj[v][k];
            if Some(u) == parent {
                continue;
            }
            if !self.seen[u] {
                self.children[v].push((u, o));
                self.explore(u, Some(v));
            } else if self.rank_in_dfs[u] < self.rank_in_dfs[v] && !self.rings[v].iter().any(|r| r.0 == u) {
                self.rings[u].push((v, o, true));
                self.rings[v].push((u, o, false));
            }
        }
    }

    fn emit(&self, v: usize, out: &mut String, numbers: &mut Vec<Option<usize>>, open: &mut HashMap<(usize, usize), usize>) {
        out.push_str(self.atoms[v]);
        let mut rings = self.rings[v].clone();
        rings.sort_by_key(|&(u, _, opens)| (opens, self.rank_in_dfs[u]));
        let mut freed = Vec::new();
        for (u, o, opens) in rings {
            let key = (v.min(u), v.max(u));
            let n = if opens {
                let n = match numbers.iter().position(Option::is_none) {
                    Some(n) => n,
                    None => {
                        numbers.push(None);
                        numbers.len() - 1
                    }
                };
                numbers[n] = Some(key.0);
                open.insert(key, n);
                out.push_str(o.symbol());
                n
            } else {
                let n = open.remove(&key).expect("ring opened earlier");
                freed.push(n);
                n
            };
            let label = n + 1;
            if label < 10 {
                out.push_str(&label.to_string());
            } else {
                out.push_str(&format!("%{label:02}"));
            }
        }
        for n in freed {
            numbers[n] = None;
        }
        let kids = &self.children[v];
        for (k, &(u, o)) in kids.iter().enumerate() {
            let last = k + 1 == kids.len();
            if !last {
                out.push('(');
            }
            out.push_str(o.symbol());
            self.emit(u, out, numbers, open);
            if !last {
                out.push(')');
            }
        }
    }
}

/// Canonical SMILES: atoms are ranked by the canonical slot order of the
/// molecular graph, each component is written depth-first from its
/// lowest-ranked atom, neighbours are visited in rank order, and ring bond
/// numbers are the lowest free ones in order of appearance.
pub fn write_smiles(mol: &Molecule) -> String {
    let n = mol.atoms.len();
    if n == 0 {
        return String::new();
    }
    let mut elements: Vec<&str> = mol.atoms.iter().map(String::as_str).collect();
    elements.sort_unstable();
    elements.dedup();
    let label = |a: &str| elements.binary_search(&a).expect("listed");
    let none = 3;
    let mut edges = vec![none; n * n];
    for b in &mol.bonds {
        edges[b.a * n + b.b] = b.order.category();
        edges[b.b * n + b.a] = b.order.category();
    }
    let g = GraphTensor::new(n, elements.len(), none, mol.atoms.iter().map(|a| label(a)).collect(), edges)
        .expect("molecule is a valid graph");
    let order = canonical_order(&g);
    let c = permute(&g, &order).expect("same size");

    let adj = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| c.edge(i, j) != none)
                .map(|j| (j, BondOrder::from_order(c.edge(i, j) as u32 + 1).expect("bond")))
                .collect()
        })
        .collect();
    let mut w = Writer {
        atoms: order.iter().map(|&old| mol.atoms[old].as_str()).collect(),
        adj,
        seen: vec![false; n],
        rank_in_dfs: vec![usize::MAX; n],
        children: vec![Vec::new(); n],
        rings: vec![Vec::new(); n],
        visits: 0,
    };
    let mut roots = Vec::new();
    for v in 0..n {
        if !w.seen[v] {
            roots.push(v);
            w.explore(v, None);
        }
    }
    let mut out = String::new();
    for (k, &r) in roots.iter().enumerate() {
        if k > 0 {
            out.push('.');
        }
        w.emit(r, &mut out, &mut Vec::new(), &mut HashMap::new());
    }
    out
}

/// `write_smiles(parse_smiles(text))`.
pub fn canonical_smiles(text: &str) -> Result<String> {
    Ok(write_smiles(&parse_smiles(text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bonds(m: &Molecule) -> Vec<(usize, usize, u32)> {
        let mut b: Vec<_> = m.bonds.iter().map(|b| (b.a, b.b, b.order.order())).collect();
        b.sort_unstable();
        b
    }

    #[test]
    fn chains_and_triples() {
        let m = parse_smiles("CCO").unwrap();
        assert_eq!(m.atoms, vec!["C", "C", "O"]);
        assert_eq!(bonds(&m), vec![(0, 1, 1), (1, 2, 1)]);
        let m = parse_smiles("C#N").unwrap();
        assert_eq!(bonds(&m), vec![(0, 1, 3)]);
    }

    #[test]
    fn ring_closure_pairs_digits() {
        let m = parse_smiles("C1CC1").unwrap();
        assert_eq!(bonds(&m), vec![(0, 1, 1), (0, 2, 1), (1, 2, 1)]);
        let m = parse_smiles("C=1CC1").unwrap();
        assert_eq!(bonds(&m), vec![(0, 1, 1), (0, 2, 2), (1, 2, 1)]);
        let m = parse_smiles("C%12CC%12").unwrap();
        assert_eq!(m.bonds.len(), 3);
    }

    #[test]
    fn branches_and_components() {
        let m = parse_smiles("CC(=O)N").unwrap();
        assert_eq!(bonds(&m), vec![(0, 1, 1), (1, 2, 2), (1, 3, 1)]);
        let m = parse_smiles("C.O").unwrap();
        assert!(m.bonds.is_empty());
        assert_eq!(parse_smiles("ClCBr").unwrap().atoms, vec!["Cl", "C", "Br"]);
    }

    #[test]
    fn errors_carry_positions() {
        assert!(matches!(parse_smiles("c1ccccc1"), Err(ChemError::NotKekulized { pos: 0, .. })));
        assert!(matches!(parse_smiles("C[NH4+]"), Err(ChemError::Unsupported { pos: 1, .. })));
        assert!(matches!(parse_smiles("CC="), Err(ChemError::Syntax { pos: 2, .. })));
        assert!(matches!(parse_smiles("C(C"), Err(ChemError::Syntax { pos: 1, .. })));
        assert!(matches!(parse_smiles("C1CC"), Err(ChemError::Syntax { .. })));
        assert!(matches!(parse_smiles("C)"), Err(ChemError::Syntax { pos: 1, .. })));
        assert!(matches!(parse_smiles("=C"), Err(ChemError::Syntax { pos: 0, .. })));
        assert!(matches!(parse_smiles("CXC"), Err(ChemError::Lexical { pos: 1, .. })));
        assert!(matches!(parse_smiles("C11"), Err(ChemError::Syntax { .. })));
        assert!(matches!(parse_smiles("C=1CC#1"), Err(ChemError::Syntax { .. })));
    }

    #[test]
    fn writer_is_canonical() {
        assert_eq!(canonical_smiles("OCC").unwrap(), canonical_smiles("CCO").unwrap());
        assert_eq!(canonical_smiles("F").unwrap(), "F");
        assert_eq!(canonical_smiles("").unwrap(), "");
        for s in ["C1CC1", "O=C1CC(N)C1", "C1CC2CC1C2", "CC.O", "C#CC(=O)NC1CC1", "C12C3C1C23"] {
            let w = canonical_smiles(s).unwrap();
            assert_eq!(canonical_smiles(&w).unwrap(), w, "{s} -> {w}");
        }
        assert_eq!(
            canonical_smiles("C1=CC=CC=C1").unwrap(),
            canonical_smiles("C=1C=CC=CC=1").unwrap()
        );
        assert_ne!(canonical_smiles("CC=O").unwrap(), canonical_smiles("C=CO").unwrap());
    }
}
