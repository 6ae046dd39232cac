#![allow(dead_code)]

use graphspn::circuit::{build_circuit, Circuit, StructureConfig, VariableSpec};
use graphspn::graphrep::{pad, permute, DenseGraph, GraphTensor, Permutation};
use graphspn::invariance::{GraphSPNModel, Representation, Variant};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random structure with parameters spread well away from uniform.
pub fn random_circuit(seed: u64, max_vars: usize, max_cats: usize) -> Circuit<f64> {
    let mut r = rng(seed);
    let vars = r.gen_range(2..=max_vars);
    let sizes: Vec<usize> = (0..vars).map(|_| r.gen_range(2..=max_cats)).collect();
    let spec = VariableSpec::new(sizes).unwrap();
    let cfg = StructureConfig {
        n_layers: r.gen_range(1..=2),
        n_sum: r.gen_range(1..=3),
        n_input: r.gen_range(1..=3),
        n_repetitions: r.gen_range(1..=3),
        structure_seed: seed,
    };
    let mut c = build_circuit(&spec, &cfg).unwrap();
    randomize(&mut c, &mut r);
    c
}

pub fn randomize(c: &mut Circuit<f64>, r: &mut ChaCha8Rng) {
    let p: Vec<f64> = (0..c.param_count()).map(|_| r.gen_range(-2.0..2.0)).collect();
    c.set_params(&p).unwrap();
}

pub fn repr(m: usize) -> Representation {
    Representation::new(m, vec!["A".into(), "B".into()], vec!["x".into(), "y".into()]).unwrap()
}

pub fn model(variant: Variant, m: usize, seed: u64) -> GraphSPNModel<f64> {
    let cfg = StructureConfig {
        n_layers: 2,
        n_sum: 3,
        n_input: 3,
        n_repetitions: 2,
        structure_seed: seed,
    };
    let mut model = GraphSPNModel::new(repr(m), variant, cfg).unwrap();
    randomize(&mut model.circuit, &mut rng(seed ^ 0xABCD));
    model
}

/// `n` real nodes over `q` node and `r` edge categories, scattered over `m` slots.
pub fn random_graph(r: &mut ChaCha8Rng, m: usize, n: usize, q: usize, rr: usize) -> GraphTensor {
    let nodes: Vec<usize> = (0..n).map(|_| r.gen_range(0..q)).collect();
    let mut edges = vec![rr; n * n];
    for i in 0..n {
        for j in 0..i {
            let e = if r.gen_bool(0.5) { r.gen_range(0..rr) } else { rr };
            edges[i * n + j] = e;
            edges[j * n + i] = e;
        }
    }
    let g = pad(&DenseGraph { nodes, edges }, m, q, rr).unwrap();
    let mut p: Vec<usize> = (0..m).collect();
    p.shuffle(r);
    permute(&g, &Permutation::new(p).unwrap()).unwrap()
}

/// Every permutation of `0..n`.
pub fn all_perms(n: usize) -> Vec<Permutation> {
    graphspn::graphrep::enumerate_tuples(n, n)
        .unwrap()
        .map(|t| Permutation::new(t).unwrap())
        .collect()
}
