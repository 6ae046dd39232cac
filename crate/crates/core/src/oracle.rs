//! Brute-force references for tests.
//!
//! Everything here enumerates explicitly and accumulates linear-space
//! probabilities in `f64` with compensated summation. Only layer parameters
//! and graph accessors are read; no evaluator, permutation or flattening
//! routine of the rest of the crate is reused.

use thiserror::Error;

use crate::circuit::{Assignment, Circuit, LayerKind, ProductKind, QueryMask, VarState};
use crate::graphrep::GraphTensor;
use crate::invariance::{GraphSPNModel, Variant};
use crate::scalar::Real;

pub const DOMAIN_LIMIT: u128 = 1_000_000;
pub const NODE_LIMIT: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("enumeration over {0} assignments exceeds the limit of {DOMAIN_LIMIT}")]
    DomainTooLarge(u128),
    #[error("{0} real nodes exceed the brute-force limit of {NODE_LIMIT}")]
    TooManyNodes(usize),
    #[error("{0}")]
    Mismatch(String),
}

pub type Result<T, E = OracleError> = std::result::Result<T, E>;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn fsum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut k = KahanSum::default();
    xs.into_iter().for_each(|x| k.add(x));
    k.value()
}

/// Linear-space value of every unit, given per-variable leaf weights
/// (`None` integrates the variable out).
fn evaluate<T: Real>(c: &Circuit<T>, leaf: &[Option<usize>]) -> f64 {
    let f = |x: T| x.to_f64().expect("finite parameter");
    let mut vals: Vec<Vec<f64>> = Vec::with_capacity(c.layers().len());
    for layer in c.layers() {
        let units = layer.units();
        let out = match layer.kind() {
            LayerKind::Input(l) => (0..units)
                .map(|u| {
                    layer
                        .scope()
                        .iter()
                        .enumerate()
                        .map(|(local, &v)| match leaf[v] {
                            Some(cat) => f(l.prob(units, local, cat, u)),
                            None => fsum((0..c.spec().categories(v)).map(|cat| f(l.prob(units, local, cat, u)))),
                        })
                        .product()
                })
                .collect(),
            LayerKind::Product { children, kind } => match kind {
                ProductKind::Hadamard => (0..units)
                    .map(|u| children.iter().map(|&ch| vals[ch][u]).product())
                    .collect(),
                ProductKind::Kronecker => {
                    // first child varies slowest
                    let mut out = vec![1.0];
                    for &ch in children {
                        out = out.iter().flat_map(|&a| vals[ch].iter().map(move |&b| a * b)).collect();
                    }
                    out
                }
            },
            LayerKind::Sum(s) => {
                let inputs: Vec<f64> = layer.children().iter().flat_map(|&ch| vals[ch].iter().copied()).collect();
                s.weights()
                    .chunks(s.inputs())
                    .map(|row| fsum(row.iter().zip(&inputs).map(|(&w, &x)| f(w) * x)))
                    .collect()
            }
        };
        vals.push(out);
    }
    vals[c.root()][0]
}

fn check_domain(sizes: impl IntoIterator<Item = usize>) -> Result<u128> {
    let mut total: u128 = 1;
    for s in sizes {
        total = total.saturating_mul(s as u128);
        if total > DOMAIN_LIMIT {
            return Err(OracleError::DomainTooLarge(total));
        }
    }
    Ok(total)
}

/// Calls `visit` with every joint value of `vars`, last variable fastest.
fn odometer(vars: &[usize], sizes: &[usize], mut visit: impl FnMut(&[usize])) {
    let mut digits = vec![0; vars.len()];
    loop {
        visit(&digits);
        let mut i = vars.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < sizes[vars[i]] {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// `p(a)` by one linear-space pass.
pub fn brute_density<T: Real>(c: &Circuit<T>, a: &[usize]) -> Result<f64> {
    if a.len() != c.var_count() {
        return Err(OracleError::Mismatch(format!("{} values for {} variables", a.len(), c.var_count())));
    }
    let leaf: Vec<Option<usize>> = a.iter().map(|&x| Some(x)).collect();
    Ok(evaluate(c, &leaf))
}

/// Sum of `p(a)` over every complete assignment.
pub fn brute_total_mass<T: Real>(c: &Circuit<T>) -> Result<f64> {
    brute_marginal(c, &QueryMask::all_marginalized(c.var_count()))
}

/// Probability of the observed part of `q`, summing every completion of the
/// marginalized variables.
pub fn brute_marginal<T: Real>(c: &Circuit<T>, q: &QueryMask) -> Result<f64> {
    if q.len() != c.var_count() {
        return Err(OracleError::Mismatch(format!("mask of {} for {} variables", q.len(), c.var_count())));
    }
    let sizes = c.spec().category_sizes();
    let free: Vec<usize> = (0..q.len()).filter(|&v| q.states()[v] == VarState::Marginalized).collect();
    check_domain(free.iter().map(|&v| sizes[v]))?;
    let mut leaf: Vec<Option<usize>> = q
        .states()
        .iter()
        .map(|s| match *s {
            VarState::Observed(x) => Some(x),
            VarState::Marginalized => None,
        })
        .collect();
    let mut total = KahanSum::default();
    odometer(&free, sizes, |vals| {
        for (&v, &x) in free.iter().zip(vals) {
            leaf[v] = Some(x);
        }
        total.add(evaluate(c, &leaf));
    });
    Ok(total.value())
}

/// Distribution of the marginalized variables given the observed ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    pub free: Vec<usize>,
    /// One entry per joint value of `free`, last variable fastest.
    pub probs: Vec<f64>,
    radix: Vec<usize>,
}

impl ConditionalTable {
    /// Probability of the free-variable values in `a`.
    pub fn prob(&self, a: &Assignment) -> f64 {
        let idx = self.free.iter().zip(&self.radix).fold(0, |acc, (&v, &r)| acc * r + a[v]);
        self.probs[idx]
    }
}

pub fn brute_conditional_table<T: Real>(c: &Circuit<T>, q: &QueryMask) -> Result<ConditionalTable> {
    if q.len() != c.var_count() {
        return Err(OracleError::Mismatch(format!("mask of {} for {} variables", q.len(), c.var_count())));
    }
    let sizes = c.spec().category_sizes();
    let free: Vec<usize> = (0..q.len()).filter(|&v| q.states()[v] == VarState::Marginalized).collect();
    check_domain(free.iter().map(|&v| sizes[v]))?;
    let mut leaf: Vec<Option<usize>> = q
        .states()
        .iter()
        .map(|s| match *s {
            VarState::Observed(x) => Some(x),
            VarState::Marginalized => None,
        })
        .collect();
    let mut joint = Vec::new();
    odometer(&free, sizes, |vals| {
        for (&v, &x) in free.iter().zip(vals) {
            leaf[v] = Some(x);
        }
        joint.push(evaluate(c, &leaf));
    });
    let z = fsum(joint.iter().copied());
    if z <= 0.0 {
        return Err(OracleError::Mismatch("evidence has zero probability".into()));
    }
    Ok(ConditionalTable {
        radix: free.iter().map(|&v| sizes[v]).collect(),
        free,
        probs: joint.into_iter().map(|p| p / z).collect(),
    })
}

/// All orderings of `0..n`, in lexicographic order.
fn orderings(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in orderings(n - 1) {
            let mut o = vec![first];
            o.extend(rest.into_iter().map(|x| if x >= first { x + 1 } else { x }));
            out.push(o);
        }
    }
    out
}

/// Tensor of `g` restricted to the slots `order`, as a flat circuit input over
/// `slots` slots; slots past `order.len()` are virtual.
fn arrange(g: &GraphTensor, order: &[usize], slots: usize) -> Vec<usize> {
    let mut a = Vec::with_capacity(slots * (slots + 1));
    for i in 0..slots {
        a.push(order.get(i).map_or(g.q(), |&s| g.node(s)));
        for j in 0..slots {
            a.push(match (order.get(i), order.get(j)) {
                (Some(&s), Some(&t)) => g.edge(s, t),
                _ => g.r(),
            });
        }
    }
    a
}

fn real_slots(g: &GraphTensor) -> Result<Vec<usize>> {
    let real: Vec<usize> = (0..g.m()).filter(|&i| g.node(i) != g.q()).collect();
    if real.len() > NODE_LIMIT {
        return Err(OracleError::TooManyNodes(real.len()));
    }
    Ok(real)
}

/// Mean of `p` over every ordering of the real nodes of `g` (virtual slots last).
pub fn brute_janossy<T: Real>(model: &GraphSPNModel<T>, g: &GraphTensor) -> Result<f64> {
    let real = real_slots(g)?;
    let orders = orderings(real.len());
    let mut total = KahanSum::default();
    for o in &orders {
        let slots: Vec<usize> = o.iter().map(|&i| real[i]).collect();
        total.add(brute_density(&model.circuit, &arrange(g, &slots, g.m()))?);
    }
    Ok(total.value() / orders.len() as f64)
}

/// Mean of `p` over every ordered `k`-node induced sub-graph of the real nodes.
pub fn brute_kary<T: Real>(model: &GraphSPNModel<T>, g: &GraphTensor) -> Result<f64> {
    let Variant::Kary { k } = model.variant else {
        return Err(OracleError::Mismatch(format!("{} model is not k-ary", model.variant)));
    };
    let real = real_slots(g)?;
    if k > real.len() {
        return Err(OracleError::Mismatch(format!("k = {k} exceeds {} real nodes", real.len())));
    }
    let mut total = KahanSum::default();
    let mut count = 0usize;
    for o in orderings(real.len()) {
        // each k-prefix appears (n-k)! times; keep the one with a sorted tail
        if o[k..].windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let slots: Vec<usize> = o[..k].iter().map(|&i| real[i]).collect();
        total.add(brute_density(&model.circuit, &arrange(g, &slots, k))?);
        count += 1;
    }
    Ok(total.value() / count as f64)
}
