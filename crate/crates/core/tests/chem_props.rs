mod common;

use std::collections::HashSet;
use std::path::Path;

use common::{random_graph, rng};
use graphspn::chem::{
    check_valency, compute_metrics, correct, graph_to_mol, mol_to_graph, parse_smiles, write_smiles, ChemError,
    ValenceTable,
};
use graphspn::data::{load_corpus, split, Reject};
use graphspn::graphrep::{canonical_order, permute, GraphTensor};
use graphspn::invariance::Representation;
use proptest::prelude::*;

const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/qm9_like.smi");

fn corpus_lines(n: usize) -> Vec<String> {
    std::fs::read_to_string(CORPUS)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .take(n)
        .map(str::to_string)
        .collect()
}

fn canonical(g: &GraphTensor) -> GraphTensor {
    permute(g, &canonical_order(g)).unwrap()
}

#[test]
fn parser_round_trips_two_hundred_molecules() {
    let repr = Representation::molecular(9);
    for smi in corpus_lines(200) {
        let mol = parse_smiles(&smi).unwrap();
        let out = write_smiles(&mol);
        let back = parse_smiles(&out).unwrap();
        assert_eq!(
            canonical(&mol_to_graph(&back, &repr).unwrap()),
            canonical(&mol_to_graph(&mol, &repr).unwrap()),
            "{smi} -> {out}"
        );
        assert_eq!(write_smiles(&back), out, "writer not idempotent on {smi}");
    }
}

#[test]
fn aromatic_input_is_not_kekulized() {
    assert!(matches!(parse_smiles("c1ccccc1"), Err(ChemError::NotKekulized { .. })));
    assert!(parse_smiles("C1=CC=CC=C1").is_ok());
}

#[test]
fn relabeled_molecules_share_one_string() {
    let mol = parse_smiles("CC1=CC(N)=C(O)C=C1F").unwrap();
    let s = write_smiles(&mol);
    let n = mol.atoms.len();
    for shift in 1..n {
        let p: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        assert_eq!(write_smiles(&mol.reordered(&p)), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_graphs_survive_writing(seed in any::<u64>(), n in 0usize..=9) {
        let repr = Representation::molecular(9);
        let g = random_graph(&mut rng(seed), 9, n, 4, 3);
        let mol = graph_to_mol(&g, &repr).unwrap();
        let back = mol_to_graph(&parse_smiles(&write_smiles(&mol)).unwrap(), &repr).unwrap();
        prop_assert_eq!(canonical(&back), canonical(&g));
    }

    #[test]
    fn correction_always_yields_valid_molecules(seed in any::<u64>(), n in 1usize..=9) {
        let repr = Representation::molecular(9);
        let vt = ValenceTable::default();
        let g = random_graph(&mut rng(seed), 9, n, 4, 3);
        let fixed = correct(&g, &repr, &vt).unwrap();
        prop_assert!(check_valency(&graph_to_mol(&fixed, &repr).unwrap(), &vt).unwrap().valid);
        // only bonds are lowered
        for i in 0..9 {
            prop_assert_eq!(fixed.node(i), g.node(i));
            for j in 0..9 {
                let (a, b) = (fixed.edge(i, j), g.edge(i, j));
                prop_assert!(a == b || a == 3 || (b != 3 && a < b));
            }
        }
    }
}

#[test]
fn corrected_validity_is_one_hundred() {
    let repr = Representation::molecular(9);
    let vt = ValenceTable::default();
    let mut r = rng(0);
    let mut invalid = Vec::new();
    while invalid.len() < 1000 {
        let g = random_graph(&mut r, 9, 9, 4, 3);
        if !check_valency(&graph_to_mol(&g, &repr).unwrap(), &vt).unwrap().valid {
            invalid.push(g);
        }
    }
    let m = compute_metrics(&invalid, &HashSet::new(), &repr, &vt, true).unwrap();
    assert_eq!(format!("{:.2}", m.validity), "100.00");
    assert_eq!(m.validity_wo_check, 0.0);
}

#[test]
fn bundled_corpus_loads_completely() {
    let repr = Representation::molecular(9);
    let (ds, report) = load_corpus(Path::new(CORPUS), &repr, 0).unwrap();
    assert_eq!(report.comments + report.blank + report.accepted + report.rejected_total(), report.lines);
    assert_eq!(report.rejected.get(&Reject::NotKekulized), None);
    assert!(ds.len() >= 10_000);
    let (again, _) = load_corpus(Path::new(CORPUS), &repr, 0).unwrap();
    assert_eq!(ds, again);
    let s = split(&ds, [0.9, 0.05, 0.05], 1).unwrap();
    assert_eq!(s.train.len() + s.valid.len() + s.test.len(), ds.len());
    assert!(s.train.canon.iter().all(|c| s.train_canon.contains(c)));
}
