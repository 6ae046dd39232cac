//! Plain-text layer table used inside model files.
//!
//! ```text
//! layers <count>
//! input <units> <scope...>
//! <logits, one row of `units` values per (variable, category)>
//! product <hadamard|kronecker> <children...>
//! sum <units> <children...>
//! <logits, one row per unit>
//! root <layer>
//! ```
//! Values are written in scientific notation with 17 fractional digits so they
//! parse back to the identical binary value.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Circuit, CircuitBuilder, CircuitError, LayerKind, ProductKind, VariableSpec};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("unexpected end of input while reading {0}")]
    Truncated(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

pub(crate) fn fmt_value<T: Real>(x: T) -> String {
    format!("{x:.17e}")
}

pub(crate) fn write_layers<T: Real>(c: &Circuit<T>, out: &mut String) {
    let _ = writeln!(out, "layers {}", c.layers.len());
    let join = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let row = |out: &mut String, xs: &[T]| {
        let line: Vec<String> = xs.iter().map(|&x| fmt_value(x)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    };
    for layer in &c.layers {
        match &layer.kind {
            LayerKind::Input(l) => {
                let _ = writeln!(out, "input {} {}", layer.units, join(&layer.scope));
                for chunk in l.logits.chunks(layer.units) {
                    row(out, chunk);
                }
            }
            LayerKind::Product { children, kind } => {
                let k = match kind {
                    ProductKind::Hadamard => "hadamard",
                    ProductKind::Kronecker => "kronecker",
                };
                let _ = writeln!(out, "product {k} {}", join(children));
            }
            LayerKind::Sum(s) => {
                let _ = writeln!(out, "sum {} {}", layer.units, join(&s.children));
                for chunk in s.logits.chunks(s.inputs) {
                    row(out, chunk);
                }
            }
        }
    }
    let _ = writeln!(out, "root {}", c.root);
}

/// Line cursor with 1-based line numbers for error messages.
pub(crate) struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    pub(crate) line: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    pub(crate) fn next_line(&mut self, what: &str) -> Result<&'a str, TextError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(TextError::Truncated(what.to_string())),
        }
    }

    /// Next line, split into a keyword and its remaining tokens.
    pub(crate) fn keyword(&mut self, expected: &str) -> Result<Vec<&'a str>, TextError> {
        let l = self.next_line(expected)?;
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some(k) if k == expected => Ok(toks.collect()),
            other => Err(self.err(format!("expected `{expected}`, found `{}`", other.unwrap_or("")))),
        }
    }

    pub(crate) fn err(&self, msg: impl Into<String>) -> TextError {
        TextError::Malformed {
            line: self.line,
            msg: msg.into(),
        }
    }

    pub(crate) fn parse<V: std::str::FromStr>(&self, tok: &str) -> Result<V, TextError> {
        tok.parse()
            .map_err(|_| self.err(format!("cannot parse `{tok}`")))
    }

    fn values<T: Real>(&mut self, count: usize, width: usize, what: &str) -> Result<Vec<T>, TextError> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let l = self.next_line(what)?;
            let before = out.len();
            for tok in l.split_whitespace() {
                let v: T = self.parse(tok)?;
                if !v.is_finite() {
                    return Err(self.err(format!("non-finite parameter `{tok}`")));
                }
                out.push(v);
            }
            if out.len() - before != width.min(count - before) || out.len() > count {
                return Err(self.err(format!("expected {width} values per row")));
            }
        }
        Ok(out)
    }
}

pub(crate) fn read_layers<T: Real>(lines: &mut Lines<'_>, spec: VariableSpec) -> Result<Circuit<T>, TextError> {
    let head = lines.keyword("layers")?;
    if head.len() != 1 {
        return Err(lines.err("`layers` takes one count"));
    }
    let count: usize = lines.parse(head[0])?;
    let mut b = CircuitBuilder::<T>::new(spec);
    for _ in 0..count {
        let l = lines.next_line("layer header")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let nums = |from: usize, lines: &Lines<'_>| -> Result<Vec<usize>, TextError> {
            toks[from..].iter().map(|t| lines.parse(t)).collect()
        };
        match toks.first().copied() {
            Some("input") if toks.len() >= 3 => {
                let units: usize = lines.parse(toks[1])?;
                let scope = nums(2, lines)?;
                if units == 0 || scope.iter().any(|&v| v >= b.spec().var_count()) {
                    return Err(lines.err("input layer outside the variable spec"));
                }
                let rows: usize = scope.iter().map(|&v| b.spec().categories(v)).sum();
                let logits = lines.values(rows * units, units, "input parameters")?;
                b.input(&scope, units, logits)?;
            }
            Some("product") if toks.len() >= 3 => {
                let kind = match toks[1] {
                    "hadamard" => ProductKind::Hadamard,
                    "kronecker" => ProductKind::Kronecker,
                    k => return Err(lines.err(format!("unknown product kind `{k}`"))),
                };
                b.product(&nums(2, lines)?, kind)?;
            }
            Some("sum") if toks.len() >= 3 => {
                let units: usize = lines.parse(toks[1])?;
                let children = nums(2, lines)?;
                if children.iter().any(|&c| c >= b.layer_count()) || units == 0 {
                    return Err(lines.err("sum layer refers to a later layer"));
                }
                let inputs: usize = children.iter().map(|&c| b.layers[c].units).sum();
                let logits = lines.values(units * inputs, inputs, "sum parameters")?;
                b.sum(&children, units, logits)?;
            }
            _ => return Err(lines.err(format!("bad layer header `{l}`"))),
        }
    }
    let root = lines.keyword("root")?;
    if root.len() != 1 {
        return Err(lines.err("`root` takes one layer index"));
    }
    let root: usize = lines.parse(root[0])?;
    Ok(b.finish(root)?)
}
