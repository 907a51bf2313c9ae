//! TN-matrix description files for the `sample` subcommand.
//!
//! A TOML document naming the tensors (as TNSR1 files), the bonds, and the
//! row/column dangling edges:
//!
//! ```toml
//! bonds = [["a.2", "b.1"]]
//! rows = [["d1", "a.1"], ["d2", "b.2"]]
//! cols = [["r", "b.3"]]
//!
//! [[tensors]]
//! id = "a"
//! path = "a.tnsr"
//!
//! [[tensors]]
//! id = "b"
//! path = "b.tnsr"
//! ```
//!
//! `rows`/`cols` list (label, node.mode) pairs; the listing order fixes the
//! row and column linear indexing (first listed fastest). Tensor paths are
//! resolved relative to the document's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tensornet::io::read_tensor;
use tensornet::{Slot, TNMatrix, TensorNetwork};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    bonds: Vec<[String; 2]>,
    rows: Vec<[String; 2]>,
    cols: Vec<[String; 2]>,
    tensors: Vec<TensorRef>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRef {
    id: String,
    path: PathBuf,
}

fn parse_slot(s: &str) -> Result<Slot> {
    let (node, mode) = s
        .rsplit_once('.')
        .with_context(|| format!("slot {s:?} is not of the form node.mode"))?;
    let mode: usize = mode
        .parse()
        .with_context(|| format!("slot {s:?} has a bad mode number"))?;
    if node.is_empty() {
        bail!("slot {s:?} has an empty node id");
    }
    Ok(Slot::new(node, mode))
}

/// Loads a TN-matrix description, reading every referenced tensor.
pub fn load(path: &Path) -> Result<TNMatrix> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading TN-matrix file {}", path.display()))?;
    let doc: Doc = toml::from_str(&text)
        .with_context(|| format!("parsing TN-matrix file {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut net = TensorNetwork::new();
    for t in &doc.tensors {
        let tensor_path = base.join(&t.path);
        let tensor = read_tensor(&tensor_path)
            .with_context(|| format!("reading tensor {}", tensor_path.display()))?;
        net.add_node(&t.id, tensor)
            .with_context(|| format!("adding tensor {:?}", t.id))?;
    }
    for [a, b] in &doc.bonds {
        net.add_bond(parse_slot(a)?, parse_slot(b)?);
    }
    let mut row_labels = Vec::new();
    for [label, slot] in &doc.rows {
        net.add_dangling(label, parse_slot(slot)?);
        row_labels.push(label.clone());
    }
    let mut col_labels = Vec::new();
    for [label, slot] in &doc.cols {
        net.add_dangling(label, parse_slot(slot)?);
        col_labels.push(label.clone());
    }
    let a = TNMatrix::new(net, row_labels, col_labels);
    let violations = a.validate();
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| format!("  - {v:?}")).collect();
        bail!(
            "TN-matrix file {} is not a valid network:\n{}",
            path.display(),
            lines.join("\n")
        );
    }
    Ok(a)
}
