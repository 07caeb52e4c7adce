//! Graph and dataset representation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Undirected adjacency in compressed-row form. Every edge is stored in both
/// directions, neighbour lists are sorted, and there are no self-loops or
/// duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Adjacency {
    /// Normalizes an arbitrary edge list: endpoints are symmetrized,
    /// duplicates collapsed and self-loops dropped.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists: Vec<Vec<u32>> = alloc::vec![Vec::new(); node_count];
        for &(u, v) in edges {
            for endpoint in [u, v] {
                if endpoint >= node_count {
                    return Err(Error::EndpointOutOfRange { endpoint, node_count });
                }
            }
            if u == v {
                continue;
            }
            lists[u].push(v as u32);
            lists[v].push(u as u32);
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            l.dedup();
            neighbors.extend_from_slice(&l);
            offsets.push(neighbors.len());
        }
        Ok(Self { offsets, neighbors })
    }

    pub fn empty(node_count: usize) -> Self {
        Self { offsets: alloc::vec![0; node_count + 1], neighbors: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Undirected edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| (v as usize) > u)
                .map(move |&v| (u, v as usize))
        })
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Class { class: usize, num_classes: usize },
    Target(f64),
}

impl Label {
    pub fn class(&self) -> Option<usize> {
        match *self {
            Label::Class { class, .. } => Some(class),
            Label::Target(_) => None,
        }
    }

    pub fn target(&self) -> Option<f64> {
        match *self {
            Label::Target(t) => Some(t),
            Label::Class { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub adjacency: Adjacency,
    pub features: Matrix,
    pub label: Label,
    /// Ranking datasets group configurations of the same base graph.
    pub group: Option<u32>,
}

impl Graph {
    pub fn new(
        node_count: usize,
        edges: &[(usize, usize)],
        features: Matrix,
        label: Label,
    ) -> Result<Self> {
        if features.rows() != node_count {
            return Err(Error::FeatureRows { expected: node_count, found: features.rows() });
        }
        if let Label::Class { class, num_classes } = label {
            if class >= num_classes {
                return Err(Error::ClassOutOfRange { class, num_classes });
            }
        }
        let adjacency = Adjacency::from_edges(node_count, edges)?;
        Ok(Self { adjacency, features, label, group: None })
    }

    pub fn with_group(mut self, group: u32) -> Self {
        self.group = Some(group);
        self
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.edge_count()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classification { num_classes: usize },
    RegressionRanking,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    #[serde(rename = "val")]
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded shuffle of `0..n` cut into train/validation/test by fraction.
    pub fn random(n: usize, train_frac: f64, val_frac: f64, seed: u64) -> Self {
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = libm::round(n as f64 * train_frac) as usize;
        let n_val = (libm::round(n as f64 * val_frac) as usize).min(n - n_train);
        let mut train = ids[..n_train].to_vec();
        let mut validation = ids[n_train..n_train + n_val].to_vec();
        let mut test = ids[n_train + n_val..].to_vec();
        train.sort_unstable();
        validation.sort_unstable();
        test.sort_unstable();
        Self { train, validation, test }
    }

    /// Split that keeps each group in a single part.
    pub fn by_group(groups: &[u32], train_frac: f64, val_frac: f64, seed: u64) -> Self {
        let distinct: BTreeSet<u32> = groups.iter().copied().collect();
        let parts = Self::random(distinct.len(), train_frac, val_frac, seed);
        let distinct: Vec<u32> = distinct.into_iter().collect();
        let pick = |which: &[usize]| -> Vec<usize> {
            let chosen: BTreeSet<u32> = which.iter().map(|&k| distinct[k]).collect();
            (0..groups.len()).filter(|&i| chosen.contains(&groups[i])).collect()
        };
        Self { train: pick(&parts.train), validation: pick(&parts.validation), test: pick(&parts.test) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Graph `i` has id `i`.
    pub graphs: Vec<Graph>,
    pub task: Task,
    pub split: Split,
}

impl Dataset {
    pub fn new(graphs: Vec<Graph>, task: Task, split: Split) -> Result<Self> {
        let n = graphs.len();
        let mut seen = BTreeSet::new();
        for &id in split.train.iter().chain(&split.validation).chain(&split.test) {
            if id >= n {
                return Err(Error::InvalidDataset(format!("split id {id} out of range ({n} graphs)")));
            }
            if !seen.insert(id) {
                return Err(Error::InvalidDataset(format!("graph {id} appears in more than one split")));
            }
        }
        for (i, g) in graphs.iter().enumerate() {
            match (task, g.label) {
                (Task::Classification { num_classes }, Label::Class { class, .. }) => {
                    if class >= num_classes {
                        return Err(Error::ClassOutOfRange { class, num_classes });
                    }
                }
                (Task::RegressionRanking, Label::Target(_)) => {}
                _ => {
                    return Err(Error::InvalidDataset(format!("graph {i} label does not match task")))
                }
            }
        }
        if let Some(first) = graphs.first() {
            let d = first.feature_dim();
            if let Some(g) = graphs.iter().find(|g| g.feature_dim() != d) {
                return Err(Error::WidthMismatch { expected: d, found: g.feature_dim() });
            }
        }
        Ok(Self { graphs, task, split })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, Graph::feature_dim)
    }

    /// Deterministic visiting order of the given ids for a seed.
    pub fn shuffled(ids: &[usize], seed: u64) -> Vec<usize> {
        let mut out = ids.to_vec();
        out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn path3() -> Graph {
        let x = Matrix::from_vec(3, 2, vec![0.0; 6]);
        Graph::new(3, &[(0, 1), (1, 2)], x, Label::Class { class: 0, num_classes: 2 }).unwrap()
    }

    #[test]
    fn path_graph_has_two_edges() {
        let g = path3();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.adjacency.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn self_loops_and_duplicates_are_normalized() {
        let adj = Adjacency::from_edges(6, &[(5, 5), (0, 1), (1, 0), (0, 1), (2, 3)]).unwrap();
        assert_eq!(adj.edge_count(), 2);
        assert_eq!(adj.degree(0), 1);
        assert_eq!(adj.degree(5), 0);
    }

    #[test]
    fn out_of_range_endpoint() {
        let err = Adjacency::from_edges(2, &[(0, 2)]).unwrap_err();
        assert_eq!(err, Error::EndpointOutOfRange { endpoint: 2, node_count: 2 });
    }

    #[test]
    fn feature_rows_must_match() {
        let x = Matrix::zeros(2, 2);
        let err = Graph::new(3, &[], x, Label::Target(0.0)).unwrap_err();
        assert_eq!(err, Error::FeatureRows { expected: 3, found: 2 });
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let split = Split { train: vec![0], validation: vec![0], test: vec![] };
        let err = Dataset::new(vec![path3()], Task::Classification { num_classes: 2 }, split);
        assert!(matches!(err, Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn random_split_is_a_partition() {
        let s = Split::random(50, 0.7, 0.15, 3);
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(s, Split::random(50, 0.7, 0.15, 3));
    }

    #[test]
    fn group_split_keeps_groups_together() {
        let groups: Vec<u32> = (0..40).map(|i| i / 4).collect();
        let s = Split::by_group(&groups, 0.6, 0.2, 1);
        for part in [&s.train, &s.validation, &s.test] {
            for &i in part.iter() {
                let g = groups[i];
                assert!(part.iter().filter(|&&k| groups[k] == g).count() == 4);
            }
        }
    }
}
