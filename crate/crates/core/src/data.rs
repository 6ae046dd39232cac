//! SMILES corpora: loading, filtering, atom shuffling and splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::chem::{mol_to_graph, parse_smiles, write_smiles, ChemError, Molecule};
use crate::graphrep::GraphTensor;
use crate::invariance::Representation;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("no molecule survived filtering ({0} lines read)")]
    Empty(usize),
    #[error("split fractions {0:?} must be nonnegative and sum to 1")]
    Fractions([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Reject {
    NotKekulized,
    UnsupportedAtom,
    UnsupportedSyntax,
    TooManyAtoms,
    Syntax,
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reject::NotKekulized => "not kekulized",
            Reject::UnsupportedAtom => "unsupported atom",
            Reject::UnsupportedSyntax => "unsupported syntax",
            Reject::TooManyAtoms => "too many atoms",
            Reject::Syntax => "syntax error",
        })
    }
}

impl From<&ChemError> for Reject {
    fn from(e: &ChemError) -> Self {
        match e {
            ChemError::NotKekulized { .. } => Reject::NotKekulized,
            ChemError::Unsupported { found, .. } if found.starts_with('[') => Reject::UnsupportedAtom,
            ChemError::Unsupported { .. } => Reject::UnsupportedSyntax,
            ChemError::UnknownElement(_) => Reject::UnsupportedAtom,
            ChemError::Capacity { .. } => Reject::TooManyAtoms,
            _ => Reject::Syntax,
        }
    }
}

/// Line accounting of one corpus load; the counts add up to `lines`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub lines: usize,
    pub comments: usize,
    pub blank: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<Reject, usize>,
}

impl FilterReport {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lines = {}", self.lines);
        let _ = writeln!(out, "accepted = {}", self.accepted);
        let _ = writeln!(out, "comments = {}", self.comments);
        let _ = writeln!(out, "blank = {}", self.blank);
        for r in [
            Reject::NotKekulized,
            Reject::UnsupportedAtom,
            Reject::UnsupportedSyntax,
            Reject::TooManyAtoms,
            Reject::Syntax,
        ] {
            let _ = writeln!(out, "rejected {r} = {}", self.rejected.get(&r).copied().unwrap_or(0));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub repr: Representation,
    pub graphs: Vec<GraphTensor>,
    /// 1-based source line of each graph.
    pub lines: Vec<usize>,
    /// Canonical SMILES of each graph.
    pub canon: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            repr: self.repr.clone(),
            graphs: idx.iter().map(|&i| self.graphs[i].clone()).collect(),
            lines: idx.iter().map(|&i| self.lines[i]).collect(),
            canon: idx.iter().map(|&i| self.canon[i].clone()).collect(),
        }
    }

    /// First `n` items.
    pub fn truncated(&self, n: usize) -> Dataset {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }
}

/// Parses one SMILES per line, skipping `#` comments and blank lines. Each
/// surviving molecule has its atoms shuffled with a generator seeded by
/// `perm_seed` before padding to `repr.m` slots.
pub fn parse_corpus(text: &str, repr: &Representation, perm_seed: u64) -> Result<(Dataset, FilterReport), DataError> {
    enum Line {
        Comment,
        Blank,
        Rejected(Reject),
        Mol(Molecule),
    }
    let parsed: Vec<Line> = text
        .par_lines()
        .map(|l| {
            let l = l.trim();
            if l.starts_with('#') {
                return Line::Comment;
            }
            if l.is_empty() {
                return Line::Blank;
            }
            // a SMILES may be followed by a name column
            let smi = l.split_whitespace().next().unwrap_or("");
            match parse_smiles(smi).and_then(|m| mol_to_graph(&m, repr).map(|_| m)) {
                Ok(m) => Line::Mol(m),
                Err(e) => Line::Rejected(Reject::from(&e)),
            }
        })
        .collect();

    let mut report = FilterReport {
        lines: parsed.len(),
        ..FilterReport::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
    let mut mols = Vec::new();
    let mut lines = Vec::new();
    for (no, line) in parsed.into_iter().enumerate() {
        match line {
            Line::Comment => report.comments += 1,
            Line::Blank => report.blank += 1,
            Line::Rejected(r) => *report.rejected.entry(r).or_default() += 1,
            Line::Mol(m) => {
                let mut p: Vec<usize> = (0..m.atoms.len()).collect();
                p.shuffle(&mut rng);
                mols.push(m.reordered(&p));
                lines.push(no + 1);
            }
        }
    }
    report.accepted = mols.len();
    if mols.is_empty() {
        return Err(DataError::Empty(report.lines));
    }
    let (graphs, canon) = mols
        .par_iter()
        .map(|m| (mol_to_graph(m, repr).expect("checked while parsing"), write_smiles(m)))
        .unzip();
    Ok((
        Dataset {
            repr: repr.clone(),
            graphs,
            lines,
            canon,
        },
        report,
    ))
}

pub fn load_corpus(path: &Path, repr: &Representation, perm_seed: u64) -> Result<(Dataset, FilterReport), DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, repr, perm_seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    /// Canonical SMILES of the training molecules.
    pub train_canon: HashSet<String>,
}

/// Seeded shuffle, then contiguous train / validation / test blocks.
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Splits, DataError> {
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::Fractions(fractions));
    }
    let n = ds.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_valid = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let train = ds.select(&idx[..n_train]);
    let train_canon = train.canon.iter().cloned().collect();
    Ok(Splits {
        train,
        valid: ds.select(&idx[n_train..n_train + n_valid]),
        test: ds.select(&idx[n_train + n_valid..]),
        train_canon,
    })
}
