use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use graphspn::chem::{compute_metrics, correct, graph_to_mol, mol_to_graph, parse_smiles, write_smiles, Metrics, ValenceTable};
use graphspn::circuit::{StructureConfig, TrainConfig};
use graphspn::data::{load_corpus, split, Dataset, FilterReport};
use graphspn::graphrep::{permute, GraphTensor, Permutation};
use graphspn::invariance::{GraphSPNModel, Representation, Variant, EXACT_LIMIT};
use graphspn::model_io::{read_model, save_model, stored_scalar};
use graphspn::queries::{conditional_generate, expectation, parse_query, QueryOptions};
use graphspn::scalar::Real;
use rayon::prelude::*;

use crate::error::CliError;
use crate::{Cmd, ConditionArgs, DataArgs, EvaluateArgs, QueryArgs, SampleArgs, Scalar, TrainArgs};

type Result<T, E = CliError> = std::result::Result<T, E>;
type Meta<'a> = &'a dyn Fn(&[(&str, String)]) -> String;

pub fn run(cmd: &Cmd, meta: Meta<'_>) -> Result<()> {
    match cmd {
        Cmd::Train(a) => match a.scalar {
            Scalar::F64 => train::<f64>(a, meta),
            Scalar::F32 => train::<f32>(a, meta),
        },
        Cmd::Sample(a) => with_model(&a.model, ModelCmd::Sample(a), meta),
        Cmd::Evaluate(a) => with_model(&a.model, ModelCmd::Evaluate(a), meta),
        Cmd::Condition(a) => with_model(&a.model, ModelCmd::Condition(a), meta),
        Cmd::Query(a) => with_model(&a.model, ModelCmd::Query(a), meta),
    }
}

enum ModelCmd<'a> {
    Sample(&'a SampleArgs),
    Evaluate(&'a EvaluateArgs),
    Condition(&'a ConditionArgs),
    Query(&'a QueryArgs),
}

fn with_model(path: &Path, cmd: ModelCmd<'_>, meta: Meta<'_>) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    match stored_scalar(&text) {
        Some("f32") => dispatch(&read_model::<f32>(&text)?, cmd, meta),
        _ => dispatch(&read_model::<f64>(&text)?, cmd, meta),
    }
}

fn dispatch<T: Real>(model: &GraphSPNModel<T>, cmd: ModelCmd<'_>, meta: Meta<'_>) -> Result<()> {
    match cmd {
        ModelCmd::Sample(a) => sample(model, a, meta),
        ModelCmd::Evaluate(a) => evaluate(model, a, meta),
        ModelCmd::Condition(a) => condition(model, a, meta),
        ModelCmd::Query(a) => query(model, a, meta),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

fn run_file(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".run.txt");
    PathBuf::from(name)
}

fn load(a: &DataArgs, repr: &Representation) -> Result<(Dataset, FilterReport)> {
    let (ds, report) = load_corpus(&a.data, repr, a.perm_seed)?;
    Ok((a.limit.map_or(ds.clone(), |n| ds.truncated(n)), report))
}

fn train<T: Real>(a: &TrainArgs, meta: Meta<'_>) -> Result<()> {
    if a.variant == Variant::Exact && a.m > EXACT_LIMIT {
        return Err(CliError::Feasibility(format!(
            "exact invariance over m = {} slots needs up to {}! circuit passes per graph (limit m = {EXACT_LIMIT}); use sort, kary or rand",
            a.m, a.m
        )));
    }
    let repr = Representation::new(
        a.m,
        a.atoms.clone(),
        ["single", "double", "triple"].iter().map(|s| s.to_string()).collect(),
    )?;
    let structure = StructureConfig {
        n_layers: a.layers,
        n_sum: a.sums,
        n_input: a.inputs,
        n_repetitions: a.repetitions,
        structure_seed: a.structure_seed,
    };
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        step_size: a.step_size,
        beta1: a.beta1,
        beta2: a.beta2,
        shuffle_seed: a.shuffle_seed,
        ..TrainConfig::default()
    };
    let (ds, report) = load(&a.data, &repr)?;
    let splits = split(&ds, a.data.split, a.data.split_seed)?;
    if splits.train.is_empty() {
        return Err(CliError::Data("the training split is empty".into()));
    }
    let mut model = GraphSPNModel::<T>::new(repr, a.variant, structure)?;
    let fit = model.fit(&splits.train.graphs, &tc, a.data.perm_seed)?;

    fs::create_dir_all(&a.out).map_err(|e| CliError::write(&a.out, e))?;
    let model_path = a.out.join("model.gspn");
    save_model(&model, &model_path).map_err(|e| CliError::Output(e.to_string()))?;
    let trace: String = fit
        .epoch_nll
        .iter()
        .enumerate()
        .map(|(e, nll)| format!("{}\t{nll}\n", e + 1))
        .collect();
    write(&a.out.join("trace.txt"), &trace)?;
    write(&a.out.join("filter.txt"), &report.report())?;
    let notes = [
        ("train", splits.train.len().to_string()),
        ("valid", splits.valid.len().to_string()),
        ("test", splits.test.len().to_string()),
    ];
    write(&a.out.join("run.txt"), &meta(&notes))?;
    println!(
        "trained {} on {} molecules; final nll {:.4}; wrote {}",
        a.variant,
        splits.train.len(),
        fit.epoch_nll.last().copied().unwrap_or(f64::NAN),
        model_path.display()
    );
    Ok(())
}

fn smiles_of(g: &GraphTensor, repr: &Representation, vt: &ValenceTable, correction: bool) -> Result<String> {
    let g = if correction { correct(g, repr, vt)? } else { g.clone() };
    Ok(write_smiles(&graph_to_mol(&g, repr)?))
}

fn sample<T: Real>(model: &GraphSPNModel<T>, a: &SampleArgs, meta: Meta<'_>) -> Result<()> {
    let graphs = model.sample_graphs(a.count, a.seed, None)?;
    let vt = ValenceTable::default();
    let lines: Vec<String> = graphs
        .par_iter()
        .map(|g| smiles_of(g, &model.repr, &vt, a.correction))
        .collect::<Result<_>>()?;
    let mut text = lines.join("\n");
    text.push('\n');
    write(&a.out, &text)?;
    write(&run_file(&a.out), &meta(&[("variant", model.variant.to_string())]))?;
    println!("wrote {} molecules to {}", lines.len(), a.out.display());
    Ok(())
}

fn metric_lines(out: &mut String, m: &Metrics) {
    for line in m.report().lines() {
        let _ = writeln!(out, "{line}");
    }
}

fn evaluate<T: Real>(model: &GraphSPNModel<T>, a: &EvaluateArgs, meta: Meta<'_>) -> Result<()> {
    if a.repeats == 0 {
        return Err(CliError::Config("repeats must be positive".into()));
    }
    let (ds, _) = load(&a.data, &model.repr)?;
    let train: HashSet<String> = split(&ds, a.data.split, a.data.split_seed)?.train_canon;
    let vt = ValenceTable::default();
    let mut runs = Vec::with_capacity(a.repeats);
    for r in 0..a.repeats {
        let seed = a.seed + r as u64;
        let graphs = model.sample_graphs(a.count, seed, None)?;
        let m = compute_metrics(&graphs, &train, &model.repr, &vt, true)?;
        runs.push((seed, m));
    }

    let mut out = meta(&[("variant", model.variant.to_string()), ("training molecules", train.len().to_string())]);
    for (seed, m) in &runs {
        let _ = writeln!(out, "\n[seed {seed}]");
        metric_lines(&mut out, m);
    }
    let mean = |f: fn(&Metrics) -> f64| runs.iter().map(|(_, m)| f(m)).sum::<f64>() / runs.len() as f64;
    let _ = writeln!(out, "\n[mean over {} seeds]", runs.len());
    let _ = writeln!(out, "validity = {:.2}", mean(|m| m.validity));
    let _ = writeln!(out, "validity_wo_check = {:.2}", mean(|m| m.validity_wo_check));
    let _ = writeln!(out, "uniqueness = {:.2}", mean(|m| m.uniqueness));
    let _ = writeln!(out, "novelty = {:.2}", mean(|m| m.novelty));
    write(&a.out, &out)?;
    write(&run_file(&a.out), &meta(&[("variant", model.variant.to_string())]))?;
    println!(
        "V {:.2}  V w/o check {:.2}  U {:.2}  N {:.2}  ({} seeds; report in {})",
        mean(|m| m.validity),
        mean(|m| m.validity_wo_check),
        mean(|m| m.uniqueness),
        mean(|m| m.novelty),
        runs.len(),
        a.out.display()
    );
    Ok(())
}

/// The fragment as a graph tensor with atom `i` in slot `anchors[i]`.
fn place_fragment(a: &ConditionArgs, repr: &Representation) -> Result<(GraphTensor, Vec<usize>)> {
    let mol = parse_smiles(&a.fragment)?;
    let k = mol.atoms.len();
    if k == 0 {
        return Err(CliError::Data("the fragment has no atoms".into()));
    }
    let g = mol_to_graph(&mol, repr)?;
    let anchors = a.anchors.clone().unwrap_or_else(|| (0..k).collect());
    if anchors.len() != k {
        return Err(CliError::Config(format!("{} anchors for a fragment of {k} atoms", anchors.len())));
    }
    let m = repr.m;
    // new slot anchors[i] holds old slot i; other slots take the remaining old ones in order
    let mut p = vec![usize::MAX; m];
    for (i, &s) in anchors.iter().enumerate() {
        if s >= m || p[s] != usize::MAX {
            return Err(CliError::Config(format!("anchor {s} is repeated or not below {m}")));
        }
        p[s] = i;
    }
    let mut rest = k..m;
    for slot in p.iter_mut().filter(|s| **s == usize::MAX) {
        *slot = rest.next().expect("counts match");
    }
    let p = Permutation::new(p)?;
    Ok((permute(&g, &p)?, anchors))
}

fn condition<T: Real>(model: &GraphSPNModel<T>, a: &ConditionArgs, meta: Meta<'_>) -> Result<()> {
    let (known, anchors) = place_fragment(a, &model.repr)?;
    let cond = conditional_generate(model, &known, &anchors, a.count, a.seed)?;
    let vt = ValenceTable::default();
    let lines: Vec<String> = cond
        .graphs
        .iter()
        .map(|g| smiles_of(g, &model.repr, &vt, false))
        .collect::<Result<_>>()?;
    let mut text = lines.join("\n");
    text.push('\n');
    write(&a.out, &text)?;
    if let Some(dir) = &a.dot_dir {
        let (nodes, edges) = (&model.repr.node_names, &model.repr.edge_names);
        write(&dir.join("fragment.dot"), &known.to_dot(nodes, edges))?;
        for (i, g) in cond.graphs.iter().enumerate() {
            write(&dir.join(format!("sample_{i:04}.dot")), &g.to_dot(nodes, edges))?;
        }
    }
    let slots = cond.slots.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
    write(&run_file(&a.out), &meta(&[("variant", model.variant.to_string()), ("evidence slots", slots.clone())]))?;
    println!("wrote {} completions to {} (evidence slots {slots})", lines.len(), a.out.display());
    Ok(())
}

fn query<T: Real>(model: &GraphSPNModel<T>, a: &QueryArgs, meta: Meta<'_>) -> Result<()> {
    let text = fs::read_to_string(&a.query).map_err(|e| CliError::Data(format!("{}: {e}", a.query.display())))?;
    let q = parse_query(&text, &model.repr)?;
    let e = expectation(
        model,
        &q,
        QueryOptions {
            n_perms: a.n_perms,
            seed: a.seed,
        },
    )?;
    let lv = e.log_value.to_f64().unwrap_or(f64::NAN);
    let result = format!("log_value = {lv}\nvalue = {}\nterms = {}\n", lv.exp(), e.terms);
    print!("{result}");
    if let Some(out) = &a.out {
        write(out, &result)?;
        write(&run_file(out), &meta(&[("variant", model.variant.to_string())]))?;
    }
    Ok(())
}
