//! Decomposition of a graph into node-capped segments.
//!
//! Edge-cut methods assign every node to exactly one segment and drop edges
//! whose endpoints land in different segments. Vertex-cut methods assign
//! every edge to exactly one segment and replicate endpoints as needed.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph, Label};
use crate::rng;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMethod {
    RandomEdgeCut,
    LocalityEdgeCut,
    RandomVertexCut,
    DegreeHashVertexCut,
}

impl PartitionMethod {
    pub const ALL: [PartitionMethod; 4] = [
        PartitionMethod::RandomEdgeCut,
        PartitionMethod::LocalityEdgeCut,
        PartitionMethod::RandomVertexCut,
        PartitionMethod::DegreeHashVertexCut,
    ];

    pub fn is_edge_cut(self) -> bool {
        matches!(self, PartitionMethod::RandomEdgeCut | PartitionMethod::LocalityEdgeCut)
    }

    pub fn name(self) -> &'static str {
        match self {
            PartitionMethod::RandomEdgeCut => "random-edge-cut",
            PartitionMethod::LocalityEdgeCut => "locality-edge-cut",
            PartitionMethod::RandomVertexCut => "random-vertex-cut",
            PartitionMethod::DegreeHashVertexCut => "degree-hash-vertex-cut",
        }
    }
}

impl core::str::FromStr for PartitionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown partition method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub parent_graph_id: usize,
    pub segment_id: usize,
    /// Parent node index of each local node, ascending.
    pub local_nodes: Vec<u32>,
    pub adjacency: Adjacency,
    pub features: Matrix,
}

impl Segment {
    /// The whole graph as a single segment.
    pub fn whole(graph_id: usize, graph: &Graph) -> Self {
        Self {
            parent_graph_id: graph_id,
            segment_id: 0,
            local_nodes: (0..graph.node_count() as u32).collect(),
            adjacency: graph.adjacency.clone(),
            features: graph.features.clone(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.local_nodes.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentedGraph {
    pub parent: usize,
    pub segments: Vec<Segment>,
    pub label: Label,
    pub group: Option<u32>,
    pub method: Option<PartitionMethod>,
    pub parent_nodes: usize,
    pub parent_edges: usize,
}

impl SegmentedGraph {
    /// Unpartitioned view used by full-graph training and evaluation.
    pub fn whole(graph_id: usize, graph: &Graph) -> Self {
        Self {
            parent: graph_id,
            segments: vec![Segment::whole(graph_id, graph)],
            label: graph.label,
            group: graph.group,
            method: None,
            parent_nodes: graph.node_count(),
            parent_edges: graph.edge_count(),
        }
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub num_segments: usize,
    pub edge_cut_ratio: f64,
    pub replication_factor: f64,
    pub sizes: Vec<usize>,
}

pub fn partition_stats(sg: &SegmentedGraph) -> PartitionStats {
    let kept: usize = sg.segments.iter().map(|s| s.adjacency.edge_count()).sum();
    let edge_cut_ratio = if sg.parent_edges == 0 {
        0.0
    } else {
        sg.parent_edges.saturating_sub(kept) as f64 / sg.parent_edges as f64
    };
    let sizes: Vec<usize> = sg.segments.iter().map(Segment::node_count).collect();
    let total: usize = sizes.iter().sum();
    let replication_factor =
        if sg.parent_nodes == 0 { 1.0 } else { total as f64 / sg.parent_nodes as f64 };
    PartitionStats { num_segments: sizes.len(), edge_cut_ratio, replication_factor, sizes }
}

/// Splits `graph` into segments of at most `max_segment_nodes` nodes.
/// The result depends only on `(graph, method, max_segment_nodes, seed, graph_id)`.
pub fn partition(
    graph_id: usize,
    graph: &Graph,
    method: PartitionMethod,
    max_segment_nodes: usize,
    seed: u64,
) -> Result<SegmentedGraph> {
    if max_segment_nodes == 0 {
        return Err(Error::InvalidArgument("max_segment_nodes must be at least 1".into()));
    }
    let n = graph.node_count();
    if !method.is_edge_cut() && max_segment_nodes < 2 && graph.edge_count() > 0 {
        return Err(Error::InvalidArgument("vertex-cut needs a cap of at least 2 to hold an edge".into()));
    }
    if n <= max_segment_nodes {
        let mut sg = SegmentedGraph::whole(graph_id, graph);
        sg.method = Some(method);
        return Ok(sg);
    }
    let mut rng = rng::stream(seed, graph_id as u64);
    let target = n.div_ceil(max_segment_nodes);
    let edge_sets = match method {
        PartitionMethod::RandomEdgeCut => {
            let node_sets = random_edge_cut(n, max_segment_nodes, &mut rng);
            return Ok(from_node_sets(graph_id, graph, method, node_sets));
        }
        PartitionMethod::LocalityEdgeCut => {
            let node_sets = locality_edge_cut(&graph.adjacency, max_segment_nodes, &mut rng);
            return Ok(from_node_sets(graph_id, graph, method, node_sets));
        }
        PartitionMethod::RandomVertexCut => {
            let mut edges: Vec<(usize, usize)> = graph.adjacency.edges().collect();
            edges.shuffle(&mut rng);
            let picks: Vec<usize> = edges.iter().map(|_| rng.gen_range(0..target)).collect();
            vertex_cut(n, &edges, &picks, max_segment_nodes, target)
        }
        PartitionMethod::DegreeHashVertexCut => {
            let adj = &graph.adjacency;
            let edges: Vec<(usize, usize)> = adj.edges().collect();
            let picks: Vec<usize> = edges
                .iter()
                .map(|&(u, v)| {
                    let key = match adj.degree(u).cmp(&adj.degree(v)) {
                        core::cmp::Ordering::Greater => v,
                        _ => u,
                    };
                    (rng::splitmix64(key as u64 ^ seed) % target as u64) as usize
                })
                .collect();
            vertex_cut(n, &edges, &picks, max_segment_nodes, target)
        }
    };
    let segments = edge_sets
        .into_iter()
        .enumerate()
        .map(|(k, (nodes, edges))| {
            let local = |v: usize| nodes.binary_search(&(v as u32)).unwrap();
            let local_edges: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (local(u), local(v))).collect();
            build_segment(graph_id, k, graph, nodes.clone(), &local_edges)
        })
        .collect();
    Ok(SegmentedGraph {
        parent: graph_id,
        segments,
        label: graph.label,
        group: graph.group,
        method: Some(method),
        parent_nodes: n,
        parent_edges: graph.edge_count(),
    })
}

fn random_edge_cut(n: usize, cap: usize, rng: &mut impl Rng) -> Vec<Vec<u32>> {
    let j = n.div_ceil(cap);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);
    let mut sets = vec![Vec::new(); j];
    for (k, v) in order.into_iter().enumerate() {
        sets[k % j].push(v);
    }
    sets
}

const UNASSIGNED: u32 = u32::MAX;

/// Greedy graph growing: each segment grows by BFS from a pseudo-peripheral
/// unassigned node until it reaches its balanced target size or its component
/// is exhausted. Leftover nodes go to the smallest segment with room.
fn locality_edge_cut(adj: &Adjacency, cap: usize, rng: &mut impl Rng) -> Vec<Vec<u32>> {
    let n = adj.node_count();
    let j = n.div_ceil(cap);
    let mut owner = vec![UNASSIGNED; n];
    let mut sets: Vec<Vec<u32>> = vec![Vec::new(); j];
    let mut remaining = n;
    for (k, set) in sets.iter_mut().enumerate() {
        if remaining == 0 {
            break;
        }
        let target = n / j + usize::from(k < n % j);
        let start = random_unassigned(&owner, remaining, rng);
        let seed = farthest_unassigned(adj, &owner, start);
        let mut queue = VecDeque::from([seed]);
        owner[seed] = k as u32;
        set.push(seed as u32);
        remaining -= 1;
        while let Some(v) = queue.pop_front() {
            if set.len() >= target {
                break;
            }
            for &u in adj.neighbors(v) {
                if set.len() >= target {
                    break;
                }
                let u = u as usize;
                if owner[u] == UNASSIGNED {
                    owner[u] = k as u32;
                    set.push(u as u32);
                    remaining -= 1;
                    queue.push_back(u);
                }
            }
        }
    }
    // Rebalance whatever the growth phase could not reach.
    while remaining > 0 {
        let start = (0..n).find(|&v| owner[v] == UNASSIGNED).unwrap();
        let mut queue = VecDeque::from([start]);
        let mut piece = Vec::new();
        owner[start] = UNASSIGNED - 1;
        while let Some(v) = queue.pop_front() {
            piece.push(v);
            for &u in adj.neighbors(v) {
                if owner[u as usize] == UNASSIGNED {
                    owner[u as usize] = UNASSIGNED - 1;
                    queue.push_back(u as usize);
                }
            }
        }
        for v in piece {
            let k = match (0..sets.len()).filter(|&k| sets[k].len() < cap).min_by_key(|&k| sets[k].len()) {
                Some(k) => k,
                None => {
                    sets.push(Vec::new());
                    sets.len() - 1
                }
            };
            owner[v] = k as u32;
            sets[k].push(v as u32);
            remaining -= 1;
        }
    }
    sets.retain(|s| !s.is_empty());
    sets
}

fn random_unassigned(owner: &[u32], remaining: usize, rng: &mut impl Rng) -> usize {
    let pick = rng.gen_range(0..remaining);
    owner.iter().enumerate().filter(|(_, &o)| o == UNASSIGNED).nth(pick).map(|(v, _)| v).unwrap()
}

/// Last node in BFS order from `start` over unassigned nodes.
fn farthest_unassigned(adj: &Adjacency, owner: &[u32], start: usize) -> usize {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(v) = queue.pop_front() {
        last = v;
        for &u in adj.neighbors(v) {
            let u = u as usize;
            if owner[u] == UNASSIGNED && seen.insert(u) {
                queue.push_back(u);
            }
        }
    }
    last
}

type EdgeSet = (Vec<u32>, Vec<(usize, usize)>);

/// Assigns edge `i` to segment `picks[i]`, probing forward when the node cap
/// would be exceeded and opening a new segment when none has room. Isolated
/// nodes go to the smallest segment with room.
fn vertex_cut(n: usize, edges: &[(usize, usize)], picks: &[usize], cap: usize, target: usize) -> Vec<EdgeSet> {
    let mut members: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); target];
    let mut assigned: Vec<Vec<(usize, usize)>> = vec![Vec::new(); target];
    let mut covered = vec![false; n];
    for (&(u, v), &first) in edges.iter().zip(picks) {
        let j = members.len();
        let fits = |m: &BTreeSet<u32>| {
            let extra = usize::from(!m.contains(&(u as u32))) + usize::from(!m.contains(&(v as u32)));
            m.len() + extra <= cap
        };
        let k = match (0..j).map(|off| (first + off) % j).find(|&k| fits(&members[k])) {
            Some(k) => k,
            None => {
                members.push(BTreeSet::new());
                assigned.push(Vec::new());
                j
            }
        };
        members[k].insert(u as u32);
        members[k].insert(v as u32);
        assigned[k].push((u, v));
        covered[u] = true;
        covered[v] = true;
    }
    for v in (0..n).filter(|&v| !covered[v]) {
        let k = match (0..members.len()).filter(|&k| members[k].len() < cap).min_by_key(|&k| members[k].len()) {
            Some(k) => k,
            None => {
                members.push(BTreeSet::new());
                assigned.push(Vec::new());
                members.len() - 1
            }
        };
        members[k].insert(v as u32);
    }
    members
        .into_iter()
        .zip(assigned)
        .filter(|(m, _)| !m.is_empty())
        .map(|(m, e)| (m.into_iter().collect(), e))
        .collect()
}

fn from_node_sets(
    graph_id: usize,
    graph: &Graph,
    method: PartitionMethod,
    node_sets: Vec<Vec<u32>>,
) -> SegmentedGraph {
    let n = graph.node_count();
    let mut local = vec![0u32; n];
    let mut owner = vec![0u32; n];
    let mut segments = Vec::with_capacity(node_sets.len());
    for (k, mut nodes) in node_sets.into_iter().enumerate() {
        nodes.sort_unstable();
        for (i, &v) in nodes.iter().enumerate() {
            local[v as usize] = i as u32;
            owner[v as usize] = k as u32;
        }
        segments.push(nodes);
    }
    let mut edge_lists: Vec<Vec<(usize, usize)>> = vec![Vec::new(); segments.len()];
    for (u, v) in graph.adjacency.edges() {
        if owner[u] == owner[v] {
            edge_lists[owner[u] as usize].push((local[u] as usize, local[v] as usize));
        }
    }
    let segments = segments
        .into_iter()
        .zip(edge_lists)
        .enumerate()
        .map(|(k, (nodes, edges))| build_segment(graph_id, k, graph, nodes, &edges))
        .collect();
    SegmentedGraph {
        parent: graph_id,
        segments,
        label: graph.label,
        group: graph.group,
        method: Some(method),
        parent_nodes: n,
        parent_edges: graph.edge_count(),
    }
}

fn build_segment(graph_id: usize, k: usize, graph: &Graph, nodes: Vec<u32>, local_edges: &[(usize, usize)]) -> Segment {
    let adjacency = Adjacency::from_edges(nodes.len(), local_edges).expect("local edges in range");
    Segment {
        parent_graph_id: graph_id,
        segment_id: k,
        features: graph.features.select_rows(&nodes),
        local_nodes: nodes,
        adjacency,
    }
}
