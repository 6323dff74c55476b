//! Text formats: graph TSV, partition CSV, and float formatting.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::entropy::Partition;
use crate::error::{Error, Result};
use crate::graph::{Edge, MessageGraph, Provenance};

/// Rounds to 9 significant decimal digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Shortest decimal text of `x` rounded to 9 significant digits.
pub fn fmt_sig9(x: f64) -> String {
    let r = round_sig9(x);
    if r == 0.0 {
        return "0".to_string();
    }
    if !(1e-4..1e15).contains(&r.abs()) {
        return format!("{r:e}");
    }
    format!("{r}")
}

fn check_field(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', ',', '\n', '\r']) {
        return Err(Error::Validation(format!(
            "id {id:?} cannot be written to TSV/CSV (empty or contains a separator)"
        )));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// `u  v  weight  provenance`, tab separated, endpoints written as node ids.
pub fn write_graph_tsv(path: impl AsRef<Path>, graph: &MessageGraph, ids: &[String]) -> Result<()> {
    let path = path.as_ref();
    if ids.len() != graph.node_count() {
        return Err(Error::Validation(format!(
            "{} ids for a graph of {} nodes",
            ids.len(),
            graph.node_count()
        )));
    }
    ids.iter().try_for_each(|id| check_field(id))?;
    let mut out = create(path)?;
    let mut body = String::from("u\tv\tweight\tprovenance\n");
    for e in graph.edges() {
        body.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            ids[e.u],
            ids[e.v],
            fmt_sig9(e.weight),
            e.provenance
        ));
    }
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a graph TSV over the given node ids (isolated nodes included).
pub fn read_graph_tsv(path: impl AsRef<Path>, ids: &[String]) -> Result<MessageGraph> {
    let path = path.as_ref();
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [u, v, w, p] = fields[..] else {
            return Err(parse_err(
                lineno + 1,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        };
        let node = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| parse_err(lineno + 1, format!("unknown node id {id:?}")))
        };
        edges.push(Edge {
            u: node(u)?,
            v: node(v)?,
            weight: w
                .parse()
                .map_err(|_| parse_err(lineno + 1, format!("bad weight {w:?}")))?,
            provenance: Provenance::parse(p)
                .ok_or_else(|| parse_err(lineno + 1, format!("bad provenance {p:?}")))?,
        });
    }
    MessageGraph::new(ids.len(), edges)
}

/// `id,cluster` rows in node order.
pub fn write_partition_csv(
    path: impl AsRef<Path>,
    partition: &Partition,
    ids: &[String],
) -> Result<()> {
    let path = path.as_ref();
    if ids.len() != partition.len() {
        return Err(Error::Validation(format!(
            "{} ids for a partition of {} nodes",
            ids.len(),
            partition.len()
        )));
    }
    ids.iter().try_for_each(|id| check_field(id))?;
    let mut out = create(path)?;
    let mut body = String::from("id,cluster\n");
    for (id, c) in ids.iter().zip(partition.assignment()) {
        body.push_str(&format!("{id},{c}\n"));
    }
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads `id,cluster` rows in file order.
pub fn read_partition_csv(path: impl AsRef<Path>) -> Result<Vec<(String, usize)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let parsed = line
            .split_once(',')
            .and_then(|(id, c)| Some((id.to_string(), c.trim().parse().ok()?)));
        rows.push(parsed.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("expected `id,cluster`, got {line:?}"),
        })?);
    }
    Ok(rows)
}
