use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::{check_valency, correct, graph_to_mol, write_smiles, ChemError, Result, ValenceTable};
use crate::graphrep::GraphTensor;
use crate::invariance::Representation;

/// Validity, uniqueness and novelty of a batch of generated graphs, in percent.
///
/// Uniqueness and novelty are taken over the valid molecules (corrected ones
/// when `correction` is on); `undefined` marks a batch without any.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub samples: usize,
    pub valid_raw: usize,
    pub valid: usize,
    pub unique: usize,
    pub novel: usize,
    pub validity: f64,
    pub validity_wo_check: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    /// Distinct valid molecules over all samples.
    pub uniqueness_of_all: f64,
    pub correction: bool,
    pub undefined: bool,
}

impl Metrics {
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "validity = {:.2}", self.validity);
        let _ = writeln!(out, "validity_wo_check = {:.2}", self.validity_wo_check);
        let _ = writeln!(out, "uniqueness = {:.2}", self.uniqueness);
        let _ = writeln!(out, "novelty = {:.2}", self.novelty);
        let _ = writeln!(out, "uniqueness_of_all = {:.2}", self.uniqueness_of_all);
        let _ = writeln!(out, "samples = {}", self.samples);
        let _ = writeln!(out, "valid_raw = {}", self.valid_raw);
        let _ = writeln!(out, "valid = {}", self.valid);
        let _ = writeln!(out, "unique = {}", self.unique);
        let _ = writeln!(out, "novel = {}", self.novel);
        let _ = writeln!(out, "correction = {}", if self.correction { "on" } else { "off" });
        let _ = writeln!(out, "undefined = {}", self.undefined);
        out
    }
}

fn pct(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        100.0 * a as f64 / b as f64
    }
}

/// Scores `samples` against the canonical SMILES of the training molecules.
pub fn compute_metrics(
    samples: &[GraphTensor],
    train_canon: &HashSet<String>,
    repr: &Representation,
    vt: &ValenceTable,
    correction: bool,
) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(ChemError::Syntax {
            pos: 0,
            msg: "no samples to score".into(),
        });
    }
    // (raw valid, canonical string of the molecule counted for U and N)
    let scored: Vec<(bool, Option<String>)> = samples
        .par_iter()
        .map(|g| {
            let raw = check_valency(&graph_to_mol(g, repr)?, vt)?.valid;
            let kept = if correction {
                Some(graph_to_mol(&correct(g, repr, vt)?, repr)?)
            } else if raw {
                Some(graph_to_mol(g, repr)?)
            } else {
                None
            };
            Ok((raw, kept.map(|m| write_smiles(&m))))
        })
        .collect::<Result<_>>()?;

    let valid_raw = scored.iter().filter(|s| s.0).count();
    let kept: Vec<&String> = scored.iter().filter_map(|s| s.1.as_ref()).collect();
    let valid = kept.len();
    let unique = kept.iter().collect::<HashSet<_>>().len();
    let novel = kept.iter().filter(|s| !train_canon.contains(s.as_str())).count();
    let n = samples.len();
    Ok(Metrics {
        samples: n,
        valid_raw,
        valid,
        unique,
        novel,
        validity: pct(valid, n),
        validity_wo_check: pct(valid_raw, n),
        uniqueness: pct(unique, valid),
        novelty: pct(novel, valid),
        uniqueness_of_all: pct(unique, n),
        correction,
        undefined: valid == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{mol_to_graph, parse_smiles};

    fn g(s: &str) -> GraphTensor {
        mol_to_graph(&parse_smiles(s).unwrap(), &Representation::molecular(4)).unwrap()
    }

    #[test]
    fn arithmetic_from_definitions() {
        let repr = Representation::molecular(4);
        let vt = ValenceTable::default();
        let train: HashSet<String> = [write_smiles(&parse_smiles("CO").unwrap())].into();
        // a, a, b and one over-bonded fluorine
        let samples = vec![g("CO"), g("OC"), g("CC"), g("F=C")];
        let m = compute_metrics(&samples, &train, &repr, &vt, false).unwrap();
        assert_eq!(m.validity_wo_check, 75.0);
        assert_eq!(m.validity, 75.0);
        assert!((m.uniqueness - 200.0 / 3.0).abs() < 1e-12);
        assert!((m.novelty - 100.0 / 3.0).abs() < 1e-12);

        let copies = vec![g("CO"); 4];
        let m = compute_metrics(&copies, &train, &repr, &vt, false).unwrap();
        assert_eq!((m.uniqueness, m.novelty), (25.0, 0.0));

        let m = compute_metrics(&samples, &train, &repr, &vt, true).unwrap();
        assert_eq!(m.validity, 100.0);
        assert_eq!(m.validity_wo_check, 75.0);
        assert!(m.report().contains("validity = 100.00"));
    }

    #[test]
    fn no_valid_samples_is_flagged() {
        let repr = Representation::molecular(4);
        let m = compute_metrics(&[g("F=C")], &HashSet::new(), &repr, &ValenceTable::default(), false).unwrap();
        assert!(m.undefined);
        assert_eq!((m.uniqueness, m.novelty), (0.0, 0.0));
        assert!(compute_metrics(&[], &HashSet::new(), &repr, &ValenceTable::default(), false).is_err());
    }
}
