//! `gspn`: train, sample, evaluate and query graph circuits on SMILES corpora.
//!
//! Exit codes: 0 success, 2 bad configuration or usage, 3 unreadable or
//! invalid input data, 4 infeasible request, 5 inference failure (unsupported
//! query, impossible evidence), 6 output could not be written.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use graphspn::invariance::Variant;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gspn", version, about = "Permutation-invariant probabilistic circuits for molecular graphs")]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "GSPN_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Fit a model to a SMILES corpus.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Draw molecules from a model.
    #[command(args_override_self = true)]
    Sample(SampleArgs),
    /// Sample and score validity, uniqueness and novelty.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Complete a molecular fragment.
    #[command(args_override_self = true)]
    Condition(ConditionArgs),
    /// Probability of a partially specified graph.
    #[command(args_override_self = true)]
    Query(QueryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scalar {
    F64,
    F32,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: graphspn::invariance::ModelError| e.to_string())
}

fn parse_split(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three comma-separated fractions".to_string())
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// SMILES corpus, one molecule per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Seed of the per-molecule atom shuffle and of random training permutations.
    #[arg(long, default_value_t = 0)]
    pub perm_seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.9,0.05,0.05", value_parser = parse_split)]
    pub split: [f64; 3],
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Keep only the first N accepted molecules.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Key-value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for the model, trace and run metadata.
    #[arg(long)]
    pub out: PathBuf,
    /// Node slots per graph.
    #[arg(long, default_value_t = 9)]
    pub m: usize,
    /// Atom alphabet.
    #[arg(long, default_value = "C,N,O,F", value_delimiter = ',')]
    pub atoms: Vec<String>,
    /// none, exact, sort, kary:K or rand:N.
    #[arg(long, default_value = "sort", value_parser = parse_variant)]
    pub variant: Variant,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 40)]
    pub sums: usize,
    #[arg(long, default_value_t = 40)]
    pub inputs: usize,
    #[arg(long, default_value_t = 40)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub structure_seed: u64,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub step_size: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.82)]
    pub beta2: f64,
    #[arg(long, default_value_t = 0)]
    pub shuffle_seed: u64,
    #[arg(long, value_enum, default_value = "f64")]
    pub scalar: Scalar,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 4000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repair over-bonded atoms before writing.
    #[arg(long)]
    pub correction: bool,
    /// SMILES output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 4000)]
    pub count: usize,
    /// Seed of the first repeat; repeat i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Metrics report file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ConditionArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// Known part of the molecule, as kekulized SMILES.
    #[arg(long)]
    pub fragment: String,
    /// Slot of each fragment atom, in SMILES order (default 0, 1, ...).
    #[arg(long, value_delimiter = ',')]
    pub anchors: Option<Vec<usize>>,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SMILES output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for one Graphviz file per molecule.
    #[arg(long)]
    pub dot_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// Query description file.
    #[arg(long)]
    pub query: PathBuf,
    /// Orderings averaged by rand models (default: the model's own).
    #[arg(long)]
    pub n_perms: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the result here, with run metadata alongside.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("gspn: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cmd = Cli::command();
    let argv = match config::expand(&cmd, std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let matches = cmd.clone().try_get_matches_from(argv).unwrap_or_else(|e| e.exit());
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            return fail(CliError::Config(e.to_string()));
        }
    }
    let (name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let sub = cmd.find_subcommand(name).expect("parsed subcommand exists");
    let meta = |notes: &[(&str, String)]| config::metadata(sub, sub_matches, notes);
    match commands::run(&cli.command, &meta) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
