//! Dataset files.
//!
//! A graph file holds one JSON object per line:
//! `{"id", "num_nodes", "edges", "features", "label", "group"?}` where the
//! label is `{"class", "num_classes"?}` or `{"target"}`. Loading symmetrizes
//! edges, collapses duplicates and drops self-loops, and renumbers graphs
//! densely in file order. The split file maps file ids to parts:
//! `{"train": [...], "val": [...], "test": [...]}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use segtrain_core::tensor::Matrix;
use segtrain_core::{Dataset, Graph, Label, Split, Task};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const GRAPHS_FILE: &str = "graphs.jsonl";
pub const SPLIT_FILE: &str = "split.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct LabelRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

impl LabelRecord {
    pub fn from_label(label: Label) -> Self {
        match label {
            Label::Class { class, num_classes } => {
                Self { class: Some(class), num_classes: Some(num_classes), target: None }
            }
            Label::Target(t) => Self { target: Some(t), ..Self::default() },
        }
    }

    /// Checks the shape of the record; the class count is settled later.
    fn kind(&self) -> std::result::Result<Kind, String> {
        match (self.class, self.num_classes, self.target) {
            (Some(class), n, None) => {
                if let Some(n) = n.filter(|&n| class >= n) {
                    return Err(format!("class {class} out of range for {n} classes"));
                }
                Ok(Kind::Class(class, n))
            }
            (None, None, Some(t)) if t.is_finite() => Ok(Kind::Target(t)),
            (None, None, Some(_)) => Err("target must be finite".into()),
            _ => Err("label needs either `class` or `target`".into()),
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Class(usize, Option<usize>),
    Target(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    id: u64,
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    label: LabelRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitRecord {
    train: Vec<u64>,
    val: Vec<u64>,
    test: Vec<u64>,
}

/// Graphs read from a file, with the ids they carried there.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFile {
    pub graphs: Vec<Graph>,
    pub ids: Vec<u64>,
    pub task: Task,
}

pub(crate) fn edge_list(adjacency: &segtrain_core::Adjacency) -> Vec<[usize; 2]> {
    adjacency.edges().map(|(u, v)| [u, v]).collect()
}

pub(crate) fn feature_rows(features: &Matrix) -> Vec<Vec<f64>> {
    (0..features.rows()).map(|i| features.row(i).to_vec()).collect()
}

pub fn read_graphs(path: &Path) -> Result<GraphFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: GraphRecord = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e))?;
        records.push((i + 1, record));
    }

    let mut width = None;
    let mut kinds = Vec::with_capacity(records.len());
    let mut seen = BTreeMap::new();
    for (line, r) in &records {
        let err = |m: String| Error::parse(path, *line, m);
        if let Some(prev) = seen.insert(r.id, *line) {
            return Err(err(format!("duplicate graph id {} (first on line {prev})", r.id)));
        }
        if let Some(&[u, v]) = r.edges.iter().find(|e| e[0] >= r.num_nodes || e[1] >= r.num_nodes) {
            return Err(err(format!("edge ({u}, {v}) out of range for {} nodes", r.num_nodes)));
        }
        if r.features.len() != r.num_nodes {
            return Err(err(format!("expected {} feature rows, found {}", r.num_nodes, r.features.len())));
        }
        for row in &r.features {
            let expected = *width.get_or_insert(row.len());
            if row.len() != expected {
                return Err(err(format!("feature width mismatch: expected {expected}, found {}", row.len())));
            }
        }
        kinds.push(r.label.kind().map_err(err)?);
    }

    let task = if kinds.iter().all(|k| matches!(k, Kind::Class(..))) {
        let num_classes = kinds
            .iter()
            .map(|k| match *k {
                Kind::Class(c, n) => n.unwrap_or(0).max(c + 1),
                Kind::Target(_) => 0,
            })
            .max()
            .unwrap_or(0);
        Task::Classification { num_classes }
    } else if let Some(pos) = kinds.iter().position(|k| matches!(k, Kind::Class(..))) {
        return Err(Error::parse(path, records[pos].0, "class label in a file of real targets"));
    } else {
        Task::RegressionRanking
    };

    let width = width.unwrap_or(0);
    let mut graphs = Vec::with_capacity(records.len());
    let mut ids = Vec::with_capacity(records.len());
    for ((line, r), kind) in records.into_iter().zip(kinds) {
        let label = match (kind, task) {
            (Kind::Class(class, _), Task::Classification { num_classes }) => Label::Class { class, num_classes },
            (Kind::Target(t), _) => Label::Target(t),
            (Kind::Class(..), Task::RegressionRanking) => unreachable!("mixed labels rejected above"),
        };
        let edges: Vec<(usize, usize)> = r.edges.iter().map(|e| (e[0], e[1])).collect();
        let features = Matrix::from_rows(&r.features, width).expect("widths checked");
        let mut graph = Graph::new(r.num_nodes, &edges, features, label).map_err(|e| Error::parse(path, line, e))?;
        graph.group = r.group;
        graphs.push(graph);
        ids.push(r.id);
    }
    Ok(GraphFile { graphs, ids, task })
}

/// Canonical text of a graph file; graph `i` gets id `i`.
pub fn encode_graphs(graphs: &[Graph]) -> Result<String> {
    let mut out = String::new();
    for (i, g) in graphs.iter().enumerate() {
        if !g.features.is_finite() || g.label.target().is_some_and(|t| !t.is_finite()) {
            return Err(Error::Config(format!("graph {i} has non-finite values")));
        }
        let record = GraphRecord {
            id: i as u64,
            num_nodes: g.node_count(),
            edges: edge_list(&g.adjacency),
            features: feature_rows(&g.features),
            label: LabelRecord::from_label(g.label),
            group: g.group,
        };
        out.push_str(&serde_json::to_string(&record).expect("records serialize"));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_graphs(path: &Path, graphs: &[Graph]) -> Result<()> {
    write_atomic(path, encode_graphs(graphs)?.as_bytes())
}

/// Reads a split file, translating file ids to dense indices.
pub fn read_split(path: &Path, ids: &[u64]) -> Result<Split> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let record: SplitRecord = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e))?;
    let index: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let map = |part: &[u64]| -> Result<Vec<usize>> {
        part.iter()
            .map(|id| index.get(id).copied().ok_or_else(|| Error::parse(path, 1, format!("unknown graph id {id}"))))
            .collect()
    };
    Ok(Split { train: map(&record.train)?, validation: map(&record.val)?, test: map(&record.test)? })
}

pub fn encode_split(split: &Split) -> String {
    let ids = |v: &[usize]| v.iter().map(|&i| i as u64).collect();
    let record = SplitRecord { train: ids(&split.train), val: ids(&split.validation), test: ids(&split.test) };
    let mut s = serde_json::to_string(&record).expect("split serializes");
    s.push('\n');
    s
}

pub fn write_split(path: &Path, split: &Split) -> Result<()> {
    write_atomic(path, encode_split(split).as_bytes())
}

/// Loads a dataset from a graph file and an optional split file. Without a
/// split every graph is placed in the training part.
pub fn load_dataset_files(graphs: &Path, split: Option<&Path>) -> Result<Dataset> {
    let file = read_graphs(graphs)?;
    let split_path = split;
    let split = match split {
        Some(p) => read_split(p, &file.ids)?,
        None => Split { train: (0..file.graphs.len()).collect(), ..Split::default() },
    };
    let blame = split_path.unwrap_or(graphs);
    Dataset::new(file.graphs, file.task, split).map_err(|e| Error::parse(blame, 1, e))
}

/// Accepts a dataset directory (`graphs.jsonl` and `split.json`) or a graph
/// file, in which case a sibling `split.json` is used when present.
pub fn dataset_paths(path: &Path) -> (PathBuf, Option<PathBuf>) {
    let (graphs, dir) = if path.is_dir() {
        (path.join(GRAPHS_FILE), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    let split = dir.join(SPLIT_FILE);
    (graphs, split.is_file().then_some(split))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (graphs, split) = dataset_paths(path);
    load_dataset_files(&graphs, split.as_deref())
}

/// Writes `graphs.jsonl` and `split.json` into `dir`. Both are encoded
/// before anything touches the disk.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    let graphs = encode_graphs(&dataset.graphs)?;
    let split = encode_split(&dataset.split);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(GRAPHS_FILE), graphs.as_bytes())?;
    write_atomic(&dir.join(SPLIT_FILE), split.as_bytes())
}

/// Hex SHA-256 of the canonical graph file.
pub fn dataset_hash(dataset: &Dataset) -> Result<String> {
    Ok(hex::encode(Sha256::digest(encode_graphs(&dataset.graphs)?.as_bytes())))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
