//! Text formats: edge lists, label files, node maps, rank vectors,
//! embeddings and class predictions.
//!
//! Floats are written with 17 significant digits so that every value reads
//! back to the same `f64`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use dnr_core::dnr::EmbeddingMatrix;
use dnr_core::{Graph, LabelMatrix, Matrix, PprVector};

use crate::error::{DnrError, Result};

/// Formats `v` with 17 significant digits, the shortest width that
/// round-trips every `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| DnrError::io(path, e))
}

pub fn load_graph(path: &Path, directed: bool, weighted: bool) -> Result<Graph> {
    let text = read_text(path)?;
    Graph::parse_edge_list(&text, directed, weighted).map_err(|e| DnrError::data(path, e))
}

pub fn load_labels(path: &Path, graph: &Graph) -> Result<LabelMatrix> {
    let text = read_text(path)?;
    LabelMatrix::parse(&text, graph).map_err(|e| DnrError::data(path, e))
}

/// Reads one node id per line, resolving each against `graph`.
pub fn load_node_list(path: &Path, graph: &Graph) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut nodes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let idx = graph
            .node_index(line)
            .ok_or_else(|| DnrError::format(path, i + 1, format!("unknown node `{line}`")))?;
        nodes.push(idx);
    }
    Ok(nodes)
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| DnrError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| DnrError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_file(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(DnrError::Json)
}

/// `internal_index<TAB>external_id`, one line per node.
pub fn write_node_map(w: &mut dyn Write, graph: &Graph) -> std::io::Result<()> {
    for (i, name) in graph.node_names().iter().enumerate() {
        writeln!(w, "{i}\t{name}")?;
    }
    Ok(())
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum RankFormat {
    /// `seed_id` followed by one value per node in internal order.
    Dense,
    /// `seed_id target_id value` for every nonzero entry.
    Sparse,
}

pub fn write_ranks(
    w: &mut dyn Write,
    graph: &Graph,
    vectors: &[PprVector],
    format: RankFormat,
) -> std::io::Result<()> {
    for v in vectors {
        let seed = graph.node_name(v.seed);
        match format {
            RankFormat::Dense => {
                write!(w, "{seed}")?;
                for &x in &v.values {
                    write!(w, "\t{}", format_float(x))?;
                }
                writeln!(w)?;
            }
            RankFormat::Sparse => {
                for (j, &x) in v.values.iter().enumerate() {
                    if x != 0.0 {
                        writeln!(w, "{seed}\t{}\t{}", graph.node_name(j), format_float(x))?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// `node_id` followed by the embedding values, one row per embedded node.
pub fn write_embeddings(
    w: &mut dyn Write,
    graph: &Graph,
    emb: &EmbeddingMatrix,
) -> std::io::Result<()> {
    for (r, &u) in emb.nodes.iter().enumerate() {
        write!(w, "{}", graph.node_name(u))?;
        for &x in emb.values.row(r) {
            write!(w, "\t{}", format_float(x))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads an embedding TSV into a matrix with one row per graph node.
/// Every node must appear exactly once and all rows must share a width.
pub fn load_embeddings(path: &Path, graph: &Graph) -> Result<Matrix> {
    let text = read_text(path)?;
    let n = graph.n_nodes();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| DnrError::format(path, i + 1, msg);
        let mut fields = line.split_whitespace();
        let name = fields.next().unwrap_or_default();
        let idx = graph
            .node_index(name)
            .ok_or_else(|| bad(format!("unknown node `{name}`")))?;
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| bad(format!("`{f}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(bad("row has no values".into()));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(bad(format!("expected {w} values, found {}", values.len())))
            }
            _ => {}
        }
        if rows[idx].replace(values).is_some() {
            return Err(bad(format!("node `{name}` appears twice")));
        }
    }
    let width = width.ok_or_else(|| DnrError::format(path, 0, "no embedding rows"))?;
    let mut m = Matrix::zeros(n, width);
    for (idx, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| {
            DnrError::format(
                path,
                0,
                format!("node `{}` has no embedding", graph.node_name(idx)),
            )
        })?;
        m.row_mut(idx).copy_from_slice(&row);
    }
    Ok(m)
}

/// `node_id<TAB>class<TAB>probability`, one line per node and class.
pub fn write_predictions(
    w: &mut dyn Write,
    graph: &Graph,
    class_names: &[String],
    nodes: &[usize],
    probs: &Matrix,
) -> std::io::Result<()> {
    for (r, &u) in nodes.iter().enumerate() {
        for (c, &p) in probs.row(r).iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}",
                graph.node_name(u),
                class_names[c],
                format_float(p)
            )?;
        }
    }
    Ok(())
}
