//! Result documents: identification JSON, tree DOT, detection score maps and ROI lists.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregate::{IdentificationTree, InclusionReport, ModelPosterior, TreeNode};
use crate::detection::{BoundingBox, Detection};
use crate::error::{Error, Result};
use crate::search::SearchMetadata;

// Struct fields are declared in alphabetical order and documents are routed
// through `serde_json::Value`, so every object serializes with sorted keys.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub bic: f64,
    pub coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    pub probability: f64,
    pub regressors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub children: Vec<TreeRecord>,
    pub name: String,
    pub p: f64,
}

impl From<&TreeNode> for TreeRecord {
    fn from(n: &TreeNode) -> Self {
        Self {
            children: n.children.iter().map(TreeRecord::from).collect(),
            name: n.name.clone(),
            p: n.probability,
        }
    }
}

impl From<&TreeRecord> for TreeNode {
    fn from(r: &TreeRecord) -> Self {
        Self {
            name: r.name.clone(),
            probability: r.p,
            children: r.children.iter().map(TreeNode::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub best_bic: f64,
    pub metadata: serde_json::Value,
    pub n_models: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub averaged_coefficients: BTreeMap<String, f64>,
    pub inclusion: BTreeMap<String, f64>,
    pub models: Vec<ModelRecord>,
    pub search: SearchSummary,
    pub tree: TreeRecord,
}

impl ResultsDocument {
    pub fn new(posterior: &ModelPosterior, report: &InclusionReport, tree: &IdentificationTree) -> Self {
        let set = &posterior.models;
        let models = set
            .models
            .iter()
            .zip(&posterior.probabilities)
            .map(|(m, p)| ModelRecord {
                bic: m.bic,
                coefficients: m.coefficients.clone(),
                intercept: m.intercept,
                probability: *p,
                regressors: set.regressor_names(m).into_iter().map(str::to_string).collect(),
            })
            .collect();
        Self {
            averaged_coefficients: report
                .regressors
                .iter()
                .map(|(k, v)| (k.clone(), v.averaged_coefficient))
                .collect(),
            inclusion: report.regressors.iter().map(|(k, v)| (k.clone(), v.inclusion)).collect(),
            models,
            search: SearchSummary {
                best_bic: set.best_bic,
                metadata: metadata_value(&set.metadata),
                n_models: set.len(),
            },
            tree: TreeRecord::from(&tree.root),
        }
    }

    pub fn tree(&self) -> IdentificationTree {
        IdentificationTree {
            root: TreeNode::from(&self.tree),
        }
    }

    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("finite values serialize");
        let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
        s.push('\n');
        s
    }
}

fn metadata_value(m: &SearchMetadata) -> serde_json::Value {
    serde_json::to_value(m).expect("metadata serializes")
}

pub fn write_results_json(
    posterior: &ModelPosterior,
    report: &InclusionReport,
    tree: &IdentificationTree,
    path: &Path,
) -> Result<ResultsDocument> {
    let doc = ResultsDocument::new(posterior, report, tree);
    std::fs::write(path, doc.to_json()).map_err(|e| Error::io(path, e))?;
    Ok(doc)
}

pub fn read_results_json(path: &Path) -> Result<ResultsDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DotOptions {
    /// Label nodes with `p(node)/p(parent)` instead of absolute probability.
    pub conditional: bool,
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph with one node per class, labelled `name\n p=0.0000`;
/// sibling edges are emitted in ascending probability order.
pub fn render_tree_dot(tree: &IdentificationTree, opts: DotOptions) -> String {
    let mut out = String::from("digraph identification {\n  node [shape=box];\n");
    let mut next = 0usize;
    fn visit(n: &TreeNode, parent_p: Option<f64>, next: &mut usize, opts: DotOptions, out: &mut String) -> usize {
        let id = *next;
        *next += 1;
        let shown = match (opts.conditional, parent_p) {
            (true, Some(pp)) if pp > 0.0 => n.probability / pp,
            (true, Some(_)) => 0.0,
            _ => n.probability,
        };
        let _ = writeln!(out, "  n{id} [label=\"{}\\n p={shown:.4}\"];", escape(&n.name));
        for c in &n.children {
            let cid = visit(c, Some(n.probability), next, opts, out);
            let _ = writeln!(out, "  n{id} -> n{cid};");
        }
        id
    }
    visit(&tree.root, None, &mut next, opts, &mut out);
    out.push_str("}\n");
    out
}

pub fn write_tree_dot(tree: &IdentificationTree, path: &Path, opts: DotOptions) -> Result<()> {
    std::fs::write(path, render_tree_dot(tree, opts)).map_err(|e| Error::io(path, e))
}

/// Indented plain-text tree for terminal output.
pub fn render_tree_text(tree: &IdentificationTree) -> String {
    let mut out = String::new();
    fn go(n: &TreeNode, depth: usize, out: &mut String) {
        let _ = writeln!(out, "{:indent$}{:.4}  {}", "", n.probability, n.name, indent = depth * 2);
        // most likely first reads better in a terminal
        for c in n.children.iter().rev() {
            go(c, depth + 1, out);
        }
    }
    go(&tree.root, 0, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiRecord {
    pub bbox: BoundingBox,
    pub id: usize,
    pub mean_score: f64,
    pub peak: (usize, usize),
    pub peak_score: f64,
    pub pixels: Vec<(usize, usize)>,
    pub spectrum: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMapMeta {
    pub byte_order: String,
    pub cols: usize,
    pub dtype: String,
    pub layout: String,
    pub max_score: f64,
    pub rows: usize,
    pub shrinkage: f64,
    pub target: String,
    pub threshold: f64,
}

fn to_sorted_json<T: Serialize>(v: &T) -> String {
    let v = serde_json::to_value(v).expect("finite values serialize");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

pub fn roi_records(detection: &Detection) -> Vec<RoiRecord> {
    detection
        .rois
        .iter()
        .enumerate()
        .map(|(id, r)| RoiRecord {
            bbox: r.bbox,
            id,
            mean_score: r.mean_score,
            peak: r.peak,
            peak_score: r.peak_score,
            pixels: r.pixels.clone(),
            spectrum: r.spectrum.values.clone(),
        })
        .collect()
}

/// Writes `scores.bin` (row-major little-endian f64), `scores.json` and `rois.json` into `dir`.
pub fn write_detection(dir: &Path, detection: &Detection, target: &str, threshold: f64, shrinkage: f64) -> Result<()> {
    let map = &detection.map;
    let bin: Vec<u8> = map.scores.iter().flat_map(|s| s.to_le_bytes()).collect();
    let p = dir.join("scores.bin");
    std::fs::write(&p, bin).map_err(|e| Error::io(&p, e))?;
    let meta = ScoreMapMeta {
        byte_order: "little".into(),
        cols: map.cols,
        dtype: "float64".into(),
        layout: "row-major".into(),
        max_score: map.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        rows: map.rows,
        shrinkage,
        target: target.to_string(),
        threshold,
    };
    let p = dir.join("scores.json");
    std::fs::write(&p, to_sorted_json(&meta)).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("rois.json");
    std::fs::write(&p, to_sorted_json(&roi_records(detection))).map_err(|e| Error::io(&p, e))
}

pub fn read_rois(path: &Path) -> Result<Vec<RoiRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn read_score_map(dir: &Path) -> Result<(ScoreMapMeta, Vec<f64>)> {
    let p = dir.join("scores.json");
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let meta: ScoreMapMeta = serde_json::from_str(&text).map_err(|e| Error::parse(&p, e.to_string()))?;
    let p = dir.join("scores.bin");
    let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
    if bytes.len() != meta.rows * meta.cols * 8 {
        return Err(Error::parse(&p, "score map size does not match scores.json"));
    }
    let scores = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((meta, scores))
}

/// `name,pip_percent,averaged_coefficient` rows in name order.
pub fn render_inclusion_csv(report: &InclusionReport) -> String {
    let mut s = String::from("name,pip_percent,averaged_coefficient\n");
    for (name, r) in &report.regressors {
        let _ = writeln!(s, "{},{:.2},{}", csv_field(name), r.inclusion * 100.0, r.averaged_coefficient);
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
