use std::collections::HashSet;
use std::ops::Deref;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GraphError, Result};

/// Bijection on `0..n`; entry `i` is the old index placed at new position `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(p: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; p.len()];
        for &x in &p {
            if x >= p.len() || std::mem::replace(&mut seen[x], true) {
                return Err(GraphError::NotBijective(format!("{p:?}")));
            }
        }
        Ok(Self(p))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &x) in self.0.iter().enumerate() {
            inv[x] = i;
        }
        Self(inv)
    }

    /// `self ∘ other`: applying `other` first, then `self`, to a tensor.
    pub fn then(&self, other: &Permutation) -> Self {
        Self(other.0.iter().map(|&i| self.0[i]).collect())
    }

    /// Extends to `0..m`, fixing the added indices.
    pub fn extend_to(&self, m: usize) -> Self {
        let mut p = self.0.clone();
        p.extend(self.0.len()..m.max(self.0.len()));
        Self(p)
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl Deref for Permutation {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// `n!`, saturating at `u128::MAX`.
pub fn factorial(n: usize) -> u128 {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k)).unwrap_or(u128::MAX)
}

/// Ordered `k`-tuples of distinct elements of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Tuples {
    n: usize,
    current: Vec<usize>,
    used: Vec<bool>,
    started: bool,
    done: bool,
}

pub fn enumerate_tuples(n: usize, k: usize) -> Result<Tuples> {
    if k > n {
        return Err(GraphError::BadTuple(format!("cannot draw {k} distinct indices from {n}")));
    }
    let mut used = vec![false; n];
    used[..k].fill(true);
    Ok(Tuples {
        n,
        current: (0..k).collect(),
        used,
        started: false,
        done: false,
    })
}

impl Tuples {
    fn advance(&mut self) -> bool {
        let k = self.current.len();
        for i in (0..k).rev() {
            let old = self.current[i];
            self.used[old] = false;
            if let Some(v) = (old + 1..self.n).find(|&v| !self.used[v]) {
                self.current[i] = v;
                self.used[v] = true;
                let mut next = 0;
                for slot in i + 1..k {
                    while self.used[next] {
                        next += 1;
                    }
                    self.current[slot] = next;
                    self.used[next] = true;
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for Tuples {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if self.started && !self.advance() {
            self.done = true;
            return None;
        }
        self.started = true;
        Some(self.current.clone())
    }
}

/// `count` distinct uniformly random permutations of `0..n`.
pub fn sample_permutations(n: usize, count: usize, seed: u64) -> Result<Vec<Permutation>> {
    if count as u128 > factorial(n) {
        return Err(GraphError::Infeasible(format!(
            "{count} distinct permutations requested but {n}! = {} exist",
            factorial(n)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let mut p: Vec<usize> = (0..n).collect();
    while out.len() < count {
        p.shuffle(&mut rng);
        if seen.insert(p.clone()) {
            out.push(Permutation(p.clone()));
        }
    }
    Ok(out)
}
