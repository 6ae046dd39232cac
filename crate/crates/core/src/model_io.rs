//! Versioned plain-text model files.
//!
//! ```text
//! GSPN 1
//! scalar f64
//! variant kary 2
//! slots 9
//! nodes C N O F
//! edges single double triple
//! structure <n_layers> <n_sum> <n_input> <n_repetitions> <structure_seed>
//! categories <one size per circuit variable>
//! layers ...
//! root <layer>
//! end
//! ```
//! Every number is decimal text, so files do not depend on byte order.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::circuit::{read_layers, write_layers, Lines, StructureConfig, TextError, VariableSpec};
use crate::invariance::{GraphSPNModel, ModelError, Representation, Variant};
use crate::scalar::Real;

pub const MAGIC: &str = "GSPN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("malformed model file: {0}")]
    Malformed(#[from] TextError),
    #[error("weight normalization failed on load: {0}")]
    Normalization(String),
    #[error("inconsistent model: {0}")]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

fn scalar_name<T: 'static>() -> &'static str {
    std::any::type_name::<T>()
}

pub fn write_model<T: Real>(model: &GraphSPNModel<T>) -> String {
    let mut out = String::new();
    let s = &model.structure;
    let repr = &model.repr;
    out.push_str(&format!("{MAGIC} {FORMAT_VERSION}\n"));
    out.push_str(&format!("scalar {}\n", scalar_name::<T>()));
    match model.variant.param() {
        Some(p) => out.push_str(&format!("variant {} {p}\n", model.variant.name())),
        None => out.push_str(&format!("variant {}\n", model.variant.name())),
    }
    out.push_str(&format!("slots {}\n", repr.m));
    out.push_str(&format!("nodes {}\n", repr.node_names.join(" ")));
    out.push_str(&format!("edges {}\n", repr.edge_names.join(" ")));
    out.push_str(&format!(
        "structure {} {} {} {} {}\n",
        s.n_layers, s.n_sum, s.n_input, s.n_repetitions, s.structure_seed
    ));
    let sizes: Vec<String> = model.circuit.spec().category_sizes().iter().map(|c| c.to_string()).collect();
    out.push_str(&format!("categories {}\n", sizes.join(" ")));
    write_layers(&model.circuit, &mut out);
    out.push_str("end\n");
    out
}

/// Scalar type named in the header of a model file, if the header is well formed.
pub fn stored_scalar(text: &str) -> Option<&str> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    lines.next()?.strip_prefix(MAGIC)?;
    let mut toks = lines.next()?.split_whitespace();
    match (toks.next(), toks.next(), toks.next()) {
        (Some("scalar"), Some(name), None) => Some(name),
        _ => None,
    }
}

pub fn read_model<T: Real>(text: &str) -> Result<GraphSPNModel<T>, ModelFileError> {
    let mut lines = Lines::new(text);
    let head = lines.next_line("header")?;
    let mut toks = head.split_whitespace();
    if toks.next() != Some(MAGIC) {
        return Err(lines.err(format!("missing `{MAGIC}` magic")).into());
    }
    let version = toks.next().unwrap_or("").to_string();
    if version != FORMAT_VERSION.to_string() {
        return Err(ModelFileError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }

    let scalar = lines.keyword("scalar")?;
    if scalar != [scalar_name::<T>()] {
        return Err(lines
            .err(format!("file stores {} parameters, reader expects {}", scalar.join(" "), scalar_name::<T>()))
            .into());
    }
    let v = lines.keyword("variant")?;
    let variant = match v.as_slice() {
        [name] => Variant::from_parts(name, None),
        [name, p] => Variant::from_parts(name, Some(lines.parse(p)?)),
        _ => return Err(lines.err("`variant` takes a name and an optional parameter").into()),
    }
    .map_err(|e| lines.err(e.to_string()))?;
    let slots = lines.keyword("slots")?;
    let m: usize = match slots.as_slice() {
        [m] => lines.parse(m)?,
        _ => return Err(lines.err("`slots` takes one count").into()),
    };
    let nodes = lines.keyword("nodes")?.iter().map(|s| s.to_string()).collect();
    let edges = lines.keyword("edges")?.iter().map(|s| s.to_string()).collect();
    let repr = Representation::new(m, nodes, edges).map_err(|e| lines.err(e.to_string()))?;

    let st = lines.keyword("structure")?;
    if st.len() != 5 {
        return Err(lines.err("`structure` takes five values").into());
    }
    let structure = StructureConfig {
        n_layers: lines.parse(st[0])?,
        n_sum: lines.parse(st[1])?,
        n_input: lines.parse(st[2])?,
        n_repetitions: lines.parse(st[3])?,
        structure_seed: lines.parse(st[4])?,
    };
    let sizes = lines
        .keyword("categories")?
        .iter()
        .map(|t| lines.parse(t))
        .collect::<Result<Vec<usize>, _>>()?;
    let spec = VariableSpec::new(sizes).map_err(TextError::from)?;
    let circuit = read_layers::<T>(&mut lines, spec)?;
    lines.keyword("end")?;

    let report = circuit.validate();
    if !report.is_ok() {
        return Err(ModelFileError::Normalization(
            report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    Ok(GraphSPNModel::from_parts(circuit, variant, repr, structure)?)
}

pub fn save_model<T: Real>(model: &GraphSPNModel<T>, path: &Path) -> Result<(), ModelFileError> {
    fs::write(path, write_model(model)).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model<T: Real>(path: &Path) -> Result<GraphSPNModel<T>, ModelFileError> {
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_model(&text)
}
