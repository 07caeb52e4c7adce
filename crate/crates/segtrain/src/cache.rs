//! On-disk segment cache, keyed by dataset hash, method, cap and seed.
//! One segmented graph per line, with the same edge and feature encoding
//! as graph files.

use std::fs;
use std::path::{Path, PathBuf};

use segtrain_core::tensor::Matrix;
use segtrain_core::{partition, Adjacency, Dataset, Label, PartitionMethod, Segment, SegmentedGraph};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{edge_list, feature_rows, write_atomic, LabelRecord};
use crate::parallel;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentRecord {
    segment_id: usize,
    local_nodes: Vec<u32>,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentedRecord {
    parent: usize,
    num_nodes: usize,
    num_edges: usize,
    method: Option<PartitionMethod>,
    label: LabelRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<u32>,
    segments: Vec<SegmentRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
}

pub fn cache_path(dir: &Path, dataset_hash: &str, method: PartitionMethod, cap: usize, seed: u64) -> PathBuf {
    let short = &dataset_hash[..dataset_hash.len().min(16)];
    dir.join(format!("segments-{short}-{}-{cap}-{seed}.jsonl", method.name()))
}

/// Partitions every graph of the dataset; graph `i` keeps id `i`.
pub fn partition_dataset(
    dataset: &Dataset,
    method: PartitionMethod,
    cap: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<SegmentedGraph>> {
    let indexed: Vec<usize> = (0..dataset.len()).collect();
    parallel::map(&indexed, threads, |&i| partition(i, &dataset.graphs[i], method, cap, seed))
        .into_iter()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn encode(graphs: &[SegmentedGraph]) -> String {
    let mut out = String::new();
    for sg in graphs {
        let record = SegmentedRecord {
            parent: sg.parent,
            num_nodes: sg.parent_nodes,
            num_edges: sg.parent_edges,
            method: sg.method,
            label: LabelRecord::from_label(sg.label),
            group: sg.group,
            segments: sg
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    segment_id: s.segment_id,
                    local_nodes: s.local_nodes.clone(),
                    edges: edge_list(&s.adjacency),
                    features: feature_rows(&s.features),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&record).expect("segments serialize"));
        out.push('\n');
    }
    out
}

/// Reads a cache file written by [`encode`]. `width` is the feature width
/// of the dataset.
pub fn read(path: &Path, width: usize) -> Result<Vec<SegmentedGraph>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: String| Error::parse(path, i + 1, m);
        let r: SegmentedRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let label = match (r.label.class, r.label.num_classes, r.label.target) {
            (Some(class), Some(num_classes), None) => Label::Class { class, num_classes },
            (None, None, Some(t)) => Label::Target(t),
            _ => return Err(bad("malformed label".into())),
        };
        let segments = r
            .segments
            .into_iter()
            .map(|s| {
                let n = s.local_nodes.len();
                let edges: Vec<(usize, usize)> = s.edges.iter().map(|e| (e[0], e[1])).collect();
                let adjacency = Adjacency::from_edges(n, &edges).map_err(|e| bad(e.to_string()))?;
                let features = Matrix::from_rows(&s.features, width)
                    .filter(|m| m.rows() == n && m.cols() == width)
                    .ok_or_else(|| bad(format!("segment {} features do not match its nodes", s.segment_id)))?;
                Ok(Segment { parent_graph_id: r.parent, segment_id: s.segment_id, local_nodes: s.local_nodes, adjacency, features })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(SegmentedGraph {
            parent: r.parent,
            segments,
            label,
            group: r.group,
            method: r.method,
            parent_nodes: r.num_nodes,
            parent_edges: r.num_edges,
        });
    }
    Ok(out)
}

/// Returns the cached partition when one exists for this key, otherwise
/// partitions the dataset and writes the cache.
pub fn load_or_partition(
    dir: &Path,
    dataset: &Dataset,
    dataset_hash: &str,
    method: PartitionMethod,
    cap: usize,
    seed: u64,
    threads: usize,
) -> Result<(Vec<SegmentedGraph>, CacheStatus, PathBuf)> {
    let path = cache_path(dir, dataset_hash, method, cap, seed);
    if path.is_file() {
        let graphs = read(&path, dataset.feature_dim())?;
        if graphs.len() == dataset.len() {
            return Ok((graphs, CacheStatus::Hit, path));
        }
    }
    let graphs = partition_dataset(dataset, method, cap, seed, threads)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&path, encode(&graphs).as_bytes())?;
    Ok((graphs, CacheStatus::Miss, path))
}
