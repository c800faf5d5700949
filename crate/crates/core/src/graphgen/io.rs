//! Edge-list and DOT formats.
//!
//! Edge lists hold two whitespace-separated 0-indexed node ids per line.
//! Lines starting with `#` are comments; a `# ... n=<count>` comment fixes
//! the node count, otherwise it is one more than the largest id.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use super::Graph;
use crate::{Error, Result};

pub fn write_edge_list<W: Write>(g: &Graph, comments: &[String], mut out: W) -> Result<()> {
    writeln!(out, "# majority-lab graph n={} kind={:?}", g.node_count(), g.kind())?;
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    for (a, b) in g.edges() {
        writeln!(out, "{a} {b}")?;
    }
    Ok(())
}

fn declared_node_count(comment: &str) -> Option<usize> {
    comment
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("n="))
        .and_then(|v| v.parse().ok())
}

/// Whitespace-separated tokens with their byte offsets.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split(char::is_whitespace)
        .scan(0usize, |pos, tok| {
            let at = *pos;
            *pos += tok.len() + 1;
            Some((at, tok))
        })
        .filter(|(_, tok)| !tok.is_empty())
}

pub fn read_edge_list<R: BufRead>(mut input: R) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut declared = None;
    let mut offset: u64 = 0;
    let mut line = String::new();
    loop {
        line.clear();
        let read = input.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        let trimmed = line.trim_start();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if declared.is_none() {
                declared = declared_node_count(comment);
            }
        } else if !trimmed.trim().is_empty() {
            let mut ids = Vec::with_capacity(2);
            for (at, token) in tokens(&line) {
                let at = offset + at as u64;
                if ids.len() == 2 {
                    return Err(Error::parse(at, "more than two ids on an edge line"));
                }
                let id: usize = token
                    .parse()
                    .map_err(|_| Error::parse(at, format!("not a node id: {token:?}")))?;
                ids.push(id);
            }
            if ids.len() != 2 {
                return Err(Error::parse(offset, "edge line needs two node ids"));
            }
            edges.push((ids[0], ids[1]));
        }
        offset += read as u64;
    }
    let n = match declared {
        Some(n) => n,
        None => edges
            .iter()
            .map(|&(a, b)| a.max(b) + 1)
            .max()
            .ok_or_else(|| Error::parse(0, "no edges and no declared node count"))?,
    };
    Graph::from_edges(n, &edges)
}

pub fn to_dot(g: &Graph) -> String {
    let mut s = String::from("graph G {\n");
    for v in 0..g.node_count() {
        let _ = writeln!(s, "  {v};");
    }
    for (a, b) in g.edges() {
        let _ = writeln!(s, "  {a} -- {b};");
    }
    s.push_str("}\n");
    s
}

/// Reads a DOT file produced by [`to_dot`] (plain node and `a -- b` statements).
pub fn from_dot(text: &str) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut max_id = None::<usize>;
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let stmt = line.trim().trim_end_matches(';').trim();
        if stmt.is_empty() || stmt.starts_with("graph") || stmt == "}" || stmt.starts_with("//") {
            offset += line.len() as u64;
            continue;
        }
        let ids: Vec<&str> = stmt.split("--").map(str::trim).collect();
        let mut parsed = Vec::with_capacity(2);
        for id in &ids {
            let v: usize = id
                .parse()
                .map_err(|_| Error::parse(offset, format!("unsupported DOT statement {stmt:?}")))?;
            max_id = Some(max_id.map_or(v, |m| m.max(v)));
            parsed.push(v);
        }
        match parsed.as_slice() {
            [_] => {}
            [a, b] => edges.push((*a, *b)),
            _ => return Err(Error::parse(offset, "edge chains are not supported")),
        }
        offset += line.len() as u64;
    }
    let n = max_id.map(|m| m + 1).ok_or_else(|| Error::parse(0, "empty DOT graph"))?;
    Graph::from_edges(n, &edges)
}

/// Hex SHA-256 (first 16 bytes) of the node count and sorted edge list.
pub fn graph_hash(g: &Graph) -> String {
    let mut h = Sha256::new();
    h.update(format!("n={}\n", g.node_count()).as_bytes());
    for (a, b) in g.edges() {
        h.update(format!("{a} {b}\n").as_bytes());
    }
    h.finalize()[..16].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
