//! Query description files.
//!
//! ```text
//! # slot 2 and its bonds unknown
//! node 0 = C
//! node 1 = O
//! node 2 = ?
//! node 3 = virtual
//! edge 0 1 = single
//! edge 0 3 = none
//! ```
//! Slots are 0-based. Node values are node category names, `virtual` or `?`;
//! edge values are edge category names, `none` or `?`. An edge line sets both
//! directions. Anything not listed is marginal (`?`). Giving one entry two
//! different values is an error.

use super::{Mode, QueryError, Result, SubgraphQuery};
use crate::invariance::Representation;

pub fn parse_query(text: &str, repr: &Representation) -> Result<SubgraphQuery> {
    let m = repr.m;
    let mut q = SubgraphQuery::marginal(m);
    let mut node_seen = vec![None; m];
    let mut edge_seen = vec![None; m * m];
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let err = |msg: String| QueryError::Parse { line, msg };
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (lhs, rhs) = body
            .split_once('=')
            .ok_or_else(|| err(format!("expected `node i = value` or `edge i j = value`, found `{body}`")))?;
        let lhs: Vec<&str> = lhs.split_whitespace().collect();
        let value = rhs.trim();
        let slot = |tok: &str| -> Result<usize> {
            match tok.parse::<usize>() {
                Ok(i) if i < m => Ok(i),
                _ => Err(err(format!("`{tok}` is not a slot index below {m}"))),
            }
        };
        match lhs.as_slice() {
            ["node", i] => {
                let i = slot(i)?;
                let mode = match value {
                    "?" => Mode::Marginal,
                    "virtual" => Mode::Evidence(repr.q()),
                    name => Mode::Evidence(
                        repr.node_category(name)
                            .ok_or_else(|| err(format!("unknown node category `{name}`")))?,
                    ),
                };
                if matches!(node_seen[i], Some(prev) if prev != mode) {
                    return Err(err(format!("node {i} given two different values")));
                }
                node_seen[i] = Some(mode);
                q.set_node(i, mode)?;
            }
            ["edge", i, j] => {
                let (i, j) = (slot(i)?, slot(j)?);
                let mode = match value {
                    "?" => Mode::Marginal,
                    "none" => Mode::Evidence(repr.r()),
                    name => Mode::Evidence(
                        repr.edge_category(name)
                            .ok_or_else(|| err(format!("unknown edge category `{name}`")))?,
                    ),
                };
                for (a, b) in [(i, j), (j, i)] {
                    if matches!(edge_seen[a * m + b], Some(prev) if prev != mode) {
                        return Err(err(format!("edge {i} {j} given two different values")));
                    }
                    edge_seen[a * m + b] = Some(mode);
                }
                q.set_edge(i, j, mode)?;
            }
            _ => return Err(err(format!("cannot read `{body}`"))),
        }
    }
    Ok(q)
}

/// Writes every non-marginal entry, one line each, in the format read by [`parse_query`].
pub fn format_query(q: &SubgraphQuery, repr: &Representation) -> String {
    let mut out = String::new();
    let node = |c: usize| repr.node_names.get(c).map(String::as_str).unwrap_or("virtual");
    let edge = |c: usize| repr.edge_names.get(c).map(String::as_str).unwrap_or("none");
    for i in 0..q.m() {
        if let Mode::Evidence(c) = q.node(i) {
            out.push_str(&format!("node {i} = {}\n", node(c)));
        }
    }
    for i in 0..q.m() {
        for j in i..q.m() {
            if let Mode::Evidence(c) = q.edge(i, j) {
                out.push_str(&format!("edge {i} {j} = {}\n", edge(c)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_modes_and_defaults() {
        let repr = Representation::molecular(4);
        let q = parse_query("# demo\nnode 0 = C\nnode 1 = ?\nnode 3 = virtual\nedge 0 1 = double # bond\nedge 2 3 = none\n", &repr)
            .unwrap();
        assert_eq!(q.node(0), Mode::Evidence(0));
        assert_eq!(q.node(1), Mode::Marginal);
        assert_eq!(q.node(2), Mode::Marginal);
        assert_eq!(q.node(3), Mode::Evidence(4));
        assert_eq!(q.edge(1, 0), Mode::Evidence(1));
        assert_eq!(q.edge(3, 2), Mode::Evidence(3));
        assert_eq!(parse_query(&format_query(&q, &repr), &repr).unwrap(), q);
    }

    #[test]
    fn reports_line_numbers() {
        let repr = Representation::molecular(3);
        for (text, line) in [
            ("node 0 = C\nnode 5 = C", 2),
            ("node 0 = Xe", 1),
            ("\n\nedge 0 1 = quadruple", 3),
            ("edge 0 1 = single\nedge 1 0 = none", 2),
            ("bond 0 1 = single", 1),
            ("node 0 C", 1),
        ] {
            match parse_query(text, &repr) {
                Err(QueryError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
