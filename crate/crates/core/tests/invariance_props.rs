mod common;

use common::{all_perms, model, random_graph, rng};
use graphspn::circuit::{build_circuit, Circuit, QueryMask, StructureConfig, VarState, VariableSpec};
use graphspn::graphrep::{factorial, permute, GraphTensor};
use graphspn::invariance::{GraphSPNModel, ModelError, Variant};
use graphspn::oracle::{brute_conditional_table, brute_janossy, brute_kary, brute_marginal};
use graphspn::queries::{conditional_generate, expectation, QueryOptions, SubgraphQuery};
use proptest::prelude::*;

const M: usize = 4;

fn graph(seed: u64, n: usize) -> GraphTensor {
    random_graph(&mut rng(seed), M, n, 2, 2)
}

fn relabelings(g: &GraphTensor) -> Vec<GraphTensor> {
    all_perms(g.m()).iter().map(|p| permute(g, p).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sort_is_exactly_invariant(seed in any::<u64>(), n in 0usize..=M) {
        let model = model(Variant::Sort, M, seed);
        let g = graph(seed, n);
        let base = model.logp_sort(&g).unwrap();
        for h in relabelings(&g) {
            prop_assert_eq!(model.logp_sort(&h).unwrap().to_bits(), base.to_bits());
        }
    }

    #[test]
    fn exact_is_invariant_and_matches_brute_force(seed in any::<u64>(), n in 1usize..=M) {
        let model = model(Variant::Exact, M, seed);
        let g = graph(seed, n);
        let base = model.logp_exact(&g).unwrap();
        for h in relabelings(&g) {
            prop_assert!((model.logp_exact(&h).unwrap() - base).abs() < 1e-9);
        }
        let brute = brute_janossy(&model, &g).unwrap();
        prop_assert!((base.exp() - brute).abs() <= 1e-12 * brute);
        let all = model.logp_rand(&g, factorial(n) as usize, seed).unwrap();
        prop_assert!((all - base).abs() < 1e-9);
    }

    #[test]
    fn kary_is_invariant_and_matches_brute_force(seed in any::<u64>(), n in 2usize..=M, k in 1usize..=2) {
        let model = model(Variant::Kary { k }, M, seed);
        let g = graph(seed, n);
        let base = model.logp_kary(&g).unwrap();
        for h in relabelings(&g) {
            prop_assert!((model.logp_kary(&h).unwrap() - base).abs() < 1e-9);
        }
        let brute = brute_kary(&model, &g).unwrap();
        prop_assert!((base.exp() - brute).abs() <= 1e-12 * brute);
    }

    #[test]
    fn exact_expectation_is_invariant(seed in any::<u64>(), n in 1usize..=M) {
        let model = model(Variant::Exact, M, seed);
        let g = graph(seed, n);
        let mut q = SubgraphQuery::evidence(&g);
        q.marginalize_nodes(&[g.real_slots()[0]]).unwrap();
        let base = expectation(&model, &q, QueryOptions::default()).unwrap().log_value;
        for p in all_perms(M) {
            let h = permute(&g, &p).unwrap();
            let mut qh = SubgraphQuery::evidence(&h);
            qh.marginalize_nodes(&[p.inverse()[g.real_slots()[0]]]).unwrap();
            prop_assert!((expectation(&model, &qh, QueryOptions::default()).unwrap().log_value - base).abs() < 1e-9);
        }
    }
}

#[test]
fn one_node_exact_is_the_plain_density() {
    let g = graph(3, 1);
    let exact = model(Variant::Exact, M, 2);
    let compact = permute(&g, &graphspn::graphrep::real_first(&g)).unwrap();
    assert!((exact.logp_exact(&g).unwrap() - exact.logp_none(&compact).unwrap()).abs() < 1e-12);
}

#[test]
fn rand_average_over_seeds_approaches_janossy() {
    // freshly initialized parameters, as at the start of training
    let cfg = StructureConfig {
        n_layers: 2,
        n_sum: 3,
        n_input: 3,
        n_repetitions: 2,
        structure_seed: 11,
    };
    let model = GraphSPNModel::<f64>::new(common::repr(3), Variant::Rand { n_perms: 2 }, cfg).unwrap();
    let g = random_graph(&mut rng(4), 3, 3, 2, 2);
    let target = brute_janossy(&model, &g).unwrap();
    let seeds = 10_000;
    let mean: f64 = (0..seeds).map(|s| model.logp_rand(&g, 2, s).unwrap().exp()).sum::<f64>() / seeds as f64;
    assert!((mean - target).abs() <= 0.01 * target, "{mean} vs {target}");
}

#[test]
fn infeasible_requests_are_refused() {
    let big = model(Variant::Exact, 9, 0);
    let g = random_graph(&mut rng(0), 9, 9, 2, 2);
    assert!(matches!(big.logp_exact(&g), Err(ModelError::Infeasible(_))));
    let r = model(Variant::Rand { n_perms: 7 }, 3, 0);
    assert!(matches!(r.logp_rand(&random_graph(&mut rng(1), 3, 3, 2, 2), 7, 0), Err(ModelError::Infeasible(_))));
    let k = model(Variant::Kary { k: 3 }, 4, 0);
    assert!(k.logp_kary(&graph(1, 2)).is_err());
    assert!(expectation(&k, &SubgraphQuery::marginal(4), QueryOptions::default()).is_err());
}

#[test]
fn pass_counts_per_variant() {
    let g = random_graph(&mut rng(8), 5, 4, 2, 2);
    let cases = [
        (Variant::Exact, 24),
        (Variant::Sort, 1),
        (Variant::None, 1),
        (Variant::Kary { k: 2 }, 12),
        (Variant::Rand { n_perms: 5 }, 5),
    ];
    for (v, passes) in cases {
        let model = model(v, 5, 1);
        model.circuit.reset_pass_count();
        model.log_score(&g, 0).unwrap();
        assert_eq!(model.circuit.pass_count(), passes, "{v}");
    }
}

#[test]
fn one_node_marginal_matches_enumeration() {
    for v in [Variant::None, Variant::Sort] {
        let model = model(v, 3, 6);
        let g = random_graph(&mut rng(2), 3, 3, 2, 2);
        let mut q = SubgraphQuery::evidence(&g);
        q.marginalize_nodes(&[1]).unwrap();
        let mask = q.compile(&model.repr).unwrap();
        let fast = expectation(&model, &q, QueryOptions::default()).unwrap().log_value;
        let brute = brute_marginal(&model.circuit, &mask).unwrap().ln();
        assert!((fast - brute).abs() < 1e-9, "{v}: {fast} vs {brute}");
    }
}

/// Total variation between an empirical histogram and a table.
fn tv(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    counts.iter().zip(probs).map(|(&c, &p)| (c as f64 / n as f64 - p).abs()).sum::<f64>() / 2.0
}

#[test]
fn conditional_samples_follow_the_brute_force_table() {
    let spec = VariableSpec::new(vec![3, 2, 4]).unwrap();
    let cfg = StructureConfig {
        n_layers: 1,
        n_sum: 1,
        n_input: 4,
        n_repetitions: 3,
        structure_seed: 2,
    };
    let mut c: Circuit<f64> = build_circuit(&spec, &cfg).unwrap();
    common::randomize(&mut c, &mut rng(3));
    let mut q = QueryMask::all_marginalized(3);
    q.set(1, VarState::Observed(1));
    let table = brute_conditional_table(&c, &q).unwrap();
    let mut counts = vec![0; table.probs.len()];
    for a in c.sample_many(&q, 10_000, 17).unwrap() {
        assert_eq!(a[1], 1);
        counts[a[0] * 4 + a[2]] += 1;
    }
    assert!(tv(&counts, &table.probs) <= 0.05);
}

#[test]
fn conditional_generation_keeps_the_fragment() {
    let known = random_graph(&mut rng(12), 5, 5, 2, 2);
    let slots = [4, 1, 2];
    for v in [Variant::None, Variant::Exact, Variant::Sort, Variant::Rand { n_perms: 6 }] {
        let model = model(v, 5, 3);
        let out = conditional_generate(&model, &known, &slots, 20, 5).unwrap();
        for g in &out.graphs {
            assert!(g.validate().is_ok());
            for (a, &i) in out.slots.iter().enumerate() {
                assert_eq!(g.node(i), out.query.node(i).observed().unwrap(), "{v}");
                for &j in &out.slots[..a] {
                    assert_eq!(g.edge(i, j), out.query.edge(i, j).observed().unwrap(), "{v}");
                }
            }
        }
        if v != Variant::Sort {
            for g in &out.graphs {
                for (a, &i) in slots.iter().enumerate() {
                    assert_eq!(g.node(i), known.node(i));
                    for &j in &slots[..a] {
                        assert_eq!(g.edge(i, j), known.edge(i, j));
                    }
                }
            }
        }
    }
    let k = model(Variant::Kary { k: 2 }, 5, 3);
    assert!(conditional_generate(&k, &known, &slots, 2, 0).is_err());
}

#[test]
fn unconditional_samples_are_valid_tensors() {
    for v in [Variant::None, Variant::Exact, Variant::Sort, Variant::Kary { k: 2 }, Variant::Rand { n_perms: 3 }] {
        let model = model(v, 4, 9);
        let gs = model.sample_graphs(50, 1, None).unwrap();
        assert_eq!(gs, model.sample_graphs(50, 1, None).unwrap());
        for g in gs {
            assert!(g.validate().is_ok());
            assert_eq!(g.m(), 4);
        }
    }
}

