use std::collections::{BTreeMap, BTreeSet, VecDeque};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segtrain_core::partition::partition_stats;
use segtrain_core::tensor::Matrix;
use segtrain_core::{partition, Graph, Label, PartitionMethod, SegmentedGraph};

fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
    let features = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect());
    Graph::new(n, edges, features, Label::Class { class: 0, num_classes: 2 }).unwrap()
}

fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    graph(n, &edges)
}

/// Two `k`-cliques, nodes `0..k` and `k..2k`, joined by the edge `(k-1, k)`.
fn two_cliques(k: usize) -> Graph {
    let mut edges = Vec::new();
    for base in [0, k] {
        for a in 0..k {
            for b in a + 1..k {
                edges.push((base + a, base + b));
            }
        }
    }
    edges.push((k - 1, k));
    graph(2 * k, &edges)
}

/// Planted two-community graph with dense blocks and sparse crossings.
fn two_communities(k: usize, p_in: f64, p_out: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..2 * k {
        for b in a + 1..2 * k {
            let p = if (a < k) == (b < k) { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((a, b));
            }
        }
    }
    graph(2 * k, &edges)
}

fn parent_nodes(sg: &SegmentedGraph, k: usize) -> BTreeSet<u32> {
    sg.segments[k].local_nodes.iter().copied().collect()
}

fn parent_edges(sg: &SegmentedGraph, k: usize) -> Vec<(usize, usize)> {
    let seg = &sg.segments[k];
    seg.adjacency
        .edges()
        .map(|(u, v)| {
            let (a, b) = (seg.local_nodes[u] as usize, seg.local_nodes[v] as usize);
            (a.min(b), a.max(b))
        })
        .collect()
}

fn connected_in_parent(g: &Graph, nodes: &BTreeSet<u32>) -> bool {
    let Some(&start) = nodes.iter().next() else { return true };
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &u in g.adjacency.neighbors(v as usize) {
            if nodes.contains(&u) && seen.insert(u) {
                queue.push_back(u);
            }
        }
    }
    seen.len() == nodes.len()
}

fn check_invariants(g: &Graph, sg: &SegmentedGraph, method: PartitionMethod, cap: usize) -> Result<(), TestCaseError> {
    let n = g.node_count();
    prop_assert!(sg.num_segments() >= 1);
    for (k, seg) in sg.segments.iter().enumerate() {
        prop_assert_eq!(seg.segment_id, k);
        prop_assert!(seg.node_count() <= cap, "segment {} has {} nodes, cap {}", k, seg.node_count(), cap);
        prop_assert_eq!(seg.features.rows(), seg.node_count());
        for (i, &v) in seg.local_nodes.iter().enumerate() {
            prop_assert_eq!(seg.features.row(i), g.features.row(v as usize));
        }
        for (a, b) in parent_edges(sg, k) {
            prop_assert!(g.adjacency.has_edge(a, b));
        }
    }
    let mut copies = vec![0usize; n];
    for seg in &sg.segments {
        for &v in &seg.local_nodes {
            copies[v as usize] += 1;
        }
    }
    let mut edge_owner: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for k in 0..sg.num_segments() {
        for e in parent_edges(sg, k) {
            *edge_owner.entry(e).or_default() += 1;
        }
    }
    if method.is_edge_cut() {
        prop_assert!(copies.iter().all(|&c| c == 1), "edge-cut must place every node once");
        let mut owner = vec![0usize; n];
        for (k, seg) in sg.segments.iter().enumerate() {
            for &v in &seg.local_nodes {
                owner[v as usize] = k;
            }
        }
        let expected: BTreeSet<(usize, usize)> = g.adjacency.edges().filter(|&(u, v)| owner[u] == owner[v]).collect();
        let kept: BTreeSet<(usize, usize)> = edge_owner.keys().copied().collect();
        prop_assert_eq!(kept, expected);
    } else {
        prop_assert!(copies.iter().all(|&c| c >= 1), "vertex-cut must cover every node");
        let all: BTreeSet<(usize, usize)> = g.adjacency.edges().collect();
        prop_assert_eq!(edge_owner.keys().copied().collect::<BTreeSet<_>>(), all);
        prop_assert!(edge_owner.values().all(|&c| c == 1), "vertex-cut must place every edge once");
    }
    Ok(())
}

#[test]
fn path_of_ten_splits_into_two_connected_halves() {
    let g = path(10);
    let sg = partition(0, &g, PartitionMethod::LocalityEdgeCut, 5, 3).unwrap();
    assert_eq!(sg.num_segments(), 2);
    let mut parts: Vec<BTreeSet<u32>> = (0..2).map(|k| parent_nodes(&sg, k)).collect();
    parts.sort();
    assert_eq!(parts[0], (0..5).collect());
    assert_eq!(parts[1], (5..10).collect());
    for p in &parts {
        assert!(connected_in_parent(&g, p));
    }
    let stats = partition_stats(&sg);
    assert_eq!(stats.edge_cut_ratio, 1.0 / 9.0);
    assert_eq!(stats.replication_factor, 1.0);
}

#[test]
fn small_graph_is_a_single_identical_segment() {
    let g = two_communities(10, 0.5, 0.1, 1);
    for method in PartitionMethod::ALL {
        let sg = partition(7, &g, method, 20, 0).unwrap();
        assert_eq!(sg.num_segments(), 1);
        let seg = &sg.segments[0];
        assert_eq!(seg.adjacency, g.adjacency);
        assert_eq!(seg.features, g.features);
        let stats = partition_stats(&sg);
        assert_eq!(stats.edge_cut_ratio, 0.0);
        assert_eq!(stats.replication_factor, 1.0);
    }
}

#[test]
fn locality_recovers_two_cliques() {
    let g = two_cliques(50);
    for seed in 0..5 {
        let sg = partition(0, &g, PartitionMethod::LocalityEdgeCut, 50, seed).unwrap();
        assert_eq!(sg.num_segments(), 2);
        let mut parts: Vec<BTreeSet<u32>> = (0..2).map(|k| parent_nodes(&sg, k)).collect();
        parts.sort();
        assert_eq!(parts[0], (0..50).collect());
        assert_eq!(parts[1], (50..100).collect());
        let stats = partition_stats(&sg);
        assert_eq!(stats.edge_cut_ratio, 1.0 / g.edge_count() as f64);
    }
}

#[test]
fn star_vertex_cut_replicates_only_the_hub() {
    let leaves = 9;
    let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
    let g = graph(leaves + 1, &edges);
    for seed in 0..10 {
        let sg = partition(0, &g, PartitionMethod::RandomVertexCut, 3, seed).unwrap();
        let hub_copies = sg.segments.iter().filter(|s| s.local_nodes.contains(&0)).count();
        for leaf in 1..=leaves as u32 {
            assert_eq!(sg.segments.iter().filter(|s| s.local_nodes.contains(&leaf)).count(), 1);
        }
        let expected = (hub_copies + leaves) as f64 / (leaves + 1) as f64;
        assert_eq!(partition_stats(&sg).replication_factor, expected);
        // Each copy of the hub carries at most two leaves.
        assert!(hub_copies >= leaves.div_ceil(2));
    }
}

#[test]
fn zero_cap_is_rejected() {
    assert!(partition(0, &path(3), PartitionMethod::LocalityEdgeCut, 0, 0).is_err());
}

#[test]
fn vertex_cut_needs_room_for_an_edge() {
    assert!(partition(0, &path(3), PartitionMethod::RandomVertexCut, 1, 0).is_err());
    assert!(partition(0, &graph(3, &[]), PartitionMethod::DegreeHashVertexCut, 1, 0).is_ok());
}

#[test]
fn locality_beats_random_edge_cut_on_two_communities() {
    let wins = (0..20)
        .filter(|&seed| {
            let g = two_communities(100, 0.08, 0.004, seed);
            let local = partition(0, &g, PartitionMethod::LocalityEdgeCut, 100, seed).unwrap();
            let random = partition(0, &g, PartitionMethod::RandomEdgeCut, 100, seed).unwrap();
            partition_stats(&local).edge_cut_ratio < partition_stats(&random).edge_cut_ratio
        })
        .count();
    assert!(wins >= 18, "locality won {wins}/20");
}

fn random_graph() -> impl Strategy<Value = (Graph, usize, u64)> {
    (1usize..120, 0.0f64..0.15, 1usize..40, any::<u64>()).prop_map(|(n, density, cap, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen::<f64>() < density {
                    edges.push((a, b));
                }
            }
        }
        (graph(n, &edges), cap, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_edge_cut_invariants((g, cap, seed) in random_graph()) {
        let sg = partition(0, &g, PartitionMethod::RandomEdgeCut, cap, seed).unwrap();
        check_invariants(&g, &sg, PartitionMethod::RandomEdgeCut, cap)?;
        prop_assert_eq!(&sg, &partition(0, &g, PartitionMethod::RandomEdgeCut, cap, seed).unwrap());
    }

    #[test]
    fn locality_edge_cut_invariants((g, cap, seed) in random_graph()) {
        let sg = partition(0, &g, PartitionMethod::LocalityEdgeCut, cap, seed).unwrap();
        check_invariants(&g, &sg, PartitionMethod::LocalityEdgeCut, cap)?;
        prop_assert_eq!(&sg, &partition(0, &g, PartitionMethod::LocalityEdgeCut, cap, seed).unwrap());
    }

    #[test]
    fn random_vertex_cut_invariants((g, cap, seed) in random_graph()) {
        prop_assume!(cap >= 2);
        let sg = partition(0, &g, PartitionMethod::RandomVertexCut, cap, seed).unwrap();
        check_invariants(&g, &sg, PartitionMethod::RandomVertexCut, cap)?;
        prop_assert_eq!(&sg, &partition(0, &g, PartitionMethod::RandomVertexCut, cap, seed).unwrap());
    }

    #[test]
    fn degree_hash_vertex_cut_invariants((g, cap, seed) in random_graph()) {
        prop_assume!(cap >= 2);
        let sg = partition(0, &g, PartitionMethod::DegreeHashVertexCut, cap, seed).unwrap();
        check_invariants(&g, &sg, PartitionMethod::DegreeHashVertexCut, cap)?;
        prop_assert_eq!(&sg, &partition(0, &g, PartitionMethod::DegreeHashVertexCut, cap, seed).unwrap());
    }
}
