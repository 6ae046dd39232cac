//! Canonical slot ordering.
//!
//! Colour refinement seeded by node category and incident edge categories,
//! followed by an individualization-refinement search over the remaining
//! ties. Every leaf of the search is a complete ordering; the canonical one
//! is the leaf whose permuted tensor is lexicographically smallest. Two
//! leaves with equal tensors differ by an automorphism, which lets the search
//! skip the rest of the sibling subtree where they diverge.

use std::collections::HashMap;

use super::{GraphTensor, Permutation};

struct Search<'a> {
    labels: Vec<usize>,
    adj: Vec<Vec<(usize, usize)>>,
    g: &'a GraphTensor,
    real: Vec<usize>,
    leaves: HashMap<Vec<usize>, Vec<usize>>,
    best: Option<(Vec<usize>, Vec<usize>)>,
}

fn rank<K: Ord + Clone>(keys: &[K]) -> (Vec<usize>, usize) {
    let mut sorted = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    let colors = keys
        .iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect();
    (colors, sorted.len())
}

impl Search<'_> {
    fn initial(&self) -> Vec<usize> {
        let keys: Vec<(usize, Vec<usize>)> = (0..self.labels.len())
            .map(|v| {
                let mut e: Vec<usize> = self.adj[v].iter().map(|&(_, c)| c).collect();
                e.sort_unstable();
                (self.labels[v], e)
            })
            .collect();
        self.refine(rank(&keys).0)
    }

    fn refine(&self, mut colors: Vec<usize>) -> Vec<usize> {
        let mut cells = distinct(&colors);
        loop {
            let keys: Vec<(usize, Vec<(usize, usize)>)> = (0..colors.len())
                .map(|v| {
                    let mut nb: Vec<(usize, usize)> = self.adj[v].iter().map(|&(u, c)| (colors[u], c)).collect();
                    nb.sort_unstable();
                    (colors[v], nb)
                })
                .collect();
            let (next, count) = rank(&keys);
            colors = next;
            if count == cells {
                return colors;
            }
            cells = count;
        }
    }

    fn individualize(&self, colors: &[usize], w: usize) -> Vec<usize> {
        let keys: Vec<(usize, bool)> = colors.iter().enumerate().map(|(u, &c)| (c, u != w)).collect();
        self.refine(rank(&keys).0)
    }

    /// Permuted tensor of the real sub-graph, node row by node row.
    fn encode(&self, order: &[usize]) -> Vec<usize> {
        let mut out = Vec::with_capacity(order.len() * (order.len() + 1));
        for &a in order {
            out.push(self.labels[a]);
            out.extend(order.iter().map(|&b| self.g.edge(self.real[a], self.real[b])));
        }
        out
    }

    /// Returns `Some(d)` when the caller should abandon every subtree
    /// below depth `d`.
    fn explore(&mut self, colors: Vec<usize>, path: &mut Vec<usize>) -> Option<usize> {
        let n = colors.len();
        if distinct(&colors) == n {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&v| colors[v]);
            let code = self.encode(&order);
            if let Some(prev) = self.leaves.get(&code) {
                let d = prev.iter().zip(path.iter()).take_while(|(a, b)| a == b).count();
                return Some(d);
            }
            self.leaves.insert(code.clone(), path.clone());
            if self.best.as_ref().is_none_or(|(b, _)| code < *b) {
                self.best = Some((code, order));
            }
            return None;
        }
        let target = first_nontrivial_cell(&colors);
        let members: Vec<usize> = (0..n).filter(|&v| colors[v] == target).collect();
        for w in members {
            let child = self.individualize(&colors, w);
            path.push(w);
            let r = self.explore(child, path);
            path.pop();
            if let Some(d) = r {
                if d < path.len() {
                    return Some(d);
                }
            }
        }
        None
    }
}

fn distinct(colors: &[usize]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

fn first_nontrivial_cell(colors: &[usize]) -> usize {
    let mut counts = vec![0usize; colors.len()];
    for &c in colors {
        counts[c] += 1;
    }
    counts.iter().position(|&k| k > 1).expect("partition is not discrete")
}

/// Ordering `p` such that `permute(g, p)` is the same tensor for every
/// graph isomorphic to `g`. Real slots come first, virtual slots last.
pub fn canonical_order(g: &GraphTensor) -> Permutation {
    let real = g.real_slots();
    let virt: Vec<usize> = (0..g.m()).filter(|&i| g.is_virtual(i)).collect();
    let local = |slot: usize| real.binary_search(&slot).ok();
    let adj = real
        .iter()
        .map(|&i| {
            real.iter()
                .filter(|&&j| j != i && g.edge(i, j) != g.r())
                .map(|&j| (local(j).expect("real"), g.edge(i, j)))
                .collect()
        })
        .collect();
    let mut s = Search {
        labels: real.iter().map(|&i| g.node(i)).collect(),
        adj,
        g,
        real: real.clone(),
        leaves: HashMap::new(),
        best: None,
    };
    let order = if real.is_empty() {
        Vec::new()
    } else {
        let start = s.initial();
        s.explore(start, &mut Vec::new());
        s.best.take().expect("search reaches a leaf").1
    };
    let mut p: Vec<usize> = order.into_iter().map(|v| real[v]).collect();
    p.extend(virt);
    Permutation::new(p).expect("ordering covers every slot")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphrep::{pad, permute, sample_permutations, DenseGraph};

    fn ring(n: usize, labels: &[usize]) -> DenseGraph {
        let mut edges = vec![3; n * n];
        for i in 0..n {
            let j = (i + 1) % n;
            edges[i * n + j] = 0;
            edges[j * n + i] = 0;
        }
        DenseGraph {
            nodes: labels.to_vec(),
            edges,
        }
    }

    fn canon(g: &GraphTensor) -> GraphTensor {
        permute(g, &canonical_order(g)).unwrap()
    }

    #[test]
    fn regular_graphs_are_canonicalized() {
        // two disjoint triangles vs a hexagon: both 2-regular, not isomorphic
        let hex = pad(&ring(6, &[0; 6]), 8, 4, 3).unwrap();
        let mut tri = ring(6, &[0; 6]);
        tri.edges = vec![3; 36];
        for (i, j) in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
            tri.edges[i * 6 + j] = 0;
            tri.edges[j * 6 + i] = 0;
        }
        let tri = pad(&tri, 8, 4, 3).unwrap();
        assert_ne!(canon(&hex), canon(&tri));
        for p in sample_permutations(8, 30, 2).unwrap() {
            assert_eq!(canon(&permute(&hex, &p).unwrap()), canon(&hex));
            assert_eq!(canon(&permute(&tri, &p).unwrap()), canon(&tri));
        }
    }

    #[test]
    fn virtual_slots_go_last() {
        let g = pad(&ring(3, &[0, 1, 2]), 5, 4, 3).unwrap();
        let p = Permutation::new(vec![3, 0, 4, 1, 2]).unwrap();
        let h = permute(&g, &p).unwrap();
        let c = canon(&h);
        assert!(c.is_virtual(3) && c.is_virtual(4));
        assert_eq!(c, canon(&g));
    }

    #[test]
    fn empty_and_single_node() {
        let e = GraphTensor::empty(3, 4, 3);
        assert_eq!(canonical_order(&e), Permutation::identity(3));
        let one = pad(&DenseGraph { nodes: vec![2], edges: vec![3] }, 3, 4, 3).unwrap();
        assert_eq!(canonical_order(&one)[0], 0);
    }
}
