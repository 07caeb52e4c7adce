//! Seeded synthetic benchmarks whose labels depend on whole-graph statistics.
//!
//! * Community classification: planted-community graphs with a "marked"
//!   indicator feature. The class is the band that the global marked fraction
//!   falls into. Marked nodes are concentrated in a few communities, so any
//!   single segment is a poor witness of the global fraction.
//! * Weighted-sum ranking: base graphs with per-node costs, each observed
//!   under several configurations that change a per-node knob. The target is
//!   a node sum of a nonlinear function of the features.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, Label, Split, Task};
use crate::rng::{self, SegRng};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    CommunityClassification,
    WeightedSumRanking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n_graphs: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub num_classes: usize,
    pub configs_per_graph: usize,
    pub feature_dim: usize,
    pub seed: u64,
    /// Target community size for the planted structure.
    pub community_size: usize,
    /// Mean within-community degree.
    pub intra_degree: usize,
    /// Shape of the per-community marking weights; larger values pile the
    /// marked nodes into fewer communities.
    pub concentration: f64,
    /// Global marked fractions covered by the class bands.
    pub marked_range: (f64, f64),
    /// Fraction of each band kept free at both edges.
    pub band_margin: f64,
    /// Scale of a per-community offset added to the noise features. It gives
    /// segments an identity unrelated to the label.
    pub community_noise: f64,
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            family: Family::CommunityClassification,
            n_graphs: 300,
            min_nodes: 200,
            max_nodes: 2000,
            num_classes: 5,
            configs_per_graph: 5,
            feature_dim: 8,
            seed: 0,
            community_size: 50,
            intra_degree: 6,
            concentration: 2.0,
            marked_range: (0.05, 0.55),
            band_margin: 0.1,
            community_noise: 0.0,
            train_frac: 0.6,
            val_frac: 0.1,
        }
    }
}

impl GeneratorSpec {
    pub fn ranking() -> Self {
        Self { family: Family::WeightedSumRanking, ..Self::default() }
    }

    pub fn generate(&self) -> Result<Dataset> {
        match self.family {
            Family::CommunityClassification => generate_classification(self),
            Family::WeightedSumRanking => generate_ranking(self),
        }
    }

    fn check_common(&self) -> Result<()> {
        if self.n_graphs == 0 || self.min_nodes == 0 || self.max_nodes < self.min_nodes {
            return Err(Error::InfeasibleSpec(format!(
                "need n_graphs ≥ 1 and 1 ≤ min_nodes ≤ max_nodes, got {} graphs in [{}, {}]",
                self.n_graphs, self.min_nodes, self.max_nodes
            )));
        }
        if self.community_size == 0 {
            return Err(Error::InfeasibleSpec("community_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.train_frac) || !(0.0..=1.0).contains(&self.val_frac) {
            return Err(Error::InfeasibleSpec("split fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Half-open marked-fraction band `[lo, hi)` of class `k`.
    pub fn band(&self, k: usize) -> (f64, f64) {
        let (lo, hi) = self.marked_range;
        let w = (hi - lo) / self.num_classes as f64;
        (lo + k as f64 * w, lo + (k + 1) as f64 * w)
    }

    /// Counting oracle: the class whose band contains `fraction`, clamped to
    /// the outer bands.
    pub fn class_of_fraction(&self, fraction: f64) -> usize {
        let (lo, hi) = self.marked_range;
        let w = (hi - lo) / self.num_classes as f64;
        let k = libm::floor((fraction - lo) / w);
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.num_classes - 1)
        }
    }
}

fn graph_rng(seed: u64, index: usize) -> SegRng {
    rng::stream(rng::splitmix64(seed ^ rng::splitmix64(index as u64)), rng::streams::GENERATE)
}

fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Node ranges of the planted communities, near-equal sizes.
fn communities(n: usize, size: usize) -> Vec<(usize, usize)> {
    let k = n.div_ceil(size).max(1);
    (0..k).map(|c| (c * n / k, (c + 1) * n / k)).collect()
}

/// Dense-within, sparse-between community graph, connected along a chain of
/// communities.
fn planted_edges(n: usize, comms: &[(usize, usize)], intra_degree: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for &(a, b) in comms {
        let m = b - a;
        if m < 2 {
            continue;
        }
        // A path keeps every community connected; random chords add density.
        for v in a + 1..b {
            edges.push((rng.gen_range(a.max(v.saturating_sub(3))..v), v));
        }
        let extra = (m * intra_degree / 2).saturating_sub(m - 1);
        for _ in 0..extra {
            let u = rng.gen_range(a..b);
            let v = rng.gen_range(a..b);
            edges.push((u, v));
        }
    }
    for w in comms.windows(2) {
        let (a0, b0) = w[0];
        let (a1, b1) = w[1];
        edges.push((rng.gen_range(a0..b0), rng.gen_range(a1..b1)));
    }
    for _ in 0..n / 100 {
        edges.push((rng.gen_range(0..n), rng.gen_range(0..n)));
    }
    edges
}

/// Community-classification dataset. Graph `i` has class `i mod C`.
pub fn generate_classification(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.check_common()?;
    if spec.num_classes < 2 {
        return Err(Error::InfeasibleSpec("num_classes must be at least 2".into()));
    }
    if spec.feature_dim < 2 {
        return Err(Error::InfeasibleSpec("feature_dim must be at least 2".into()));
    }
    let (lo, hi) = spec.marked_range;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) || !(0.0..0.5).contains(&spec.band_margin) {
        return Err(Error::InfeasibleSpec("marked_range must satisfy 0 ≤ lo < hi ≤ 1 and band_margin in [0, 0.5)".into()));
    }
    // Every band needs at least one admissible marked count at the smallest size.
    for k in 0..spec.num_classes {
        if marked_count_range(spec, k, spec.min_nodes).is_none() {
            return Err(Error::InfeasibleSpec(format!(
                "class band {k} holds no integer marked count for {}-node graphs",
                spec.min_nodes
            )));
        }
    }
    let graphs = (0..spec.n_graphs)
        .map(|i| classification_graph(spec, i, i % spec.num_classes))
        .collect::<Result<Vec<_>>>()?;
    let split = Split::random(spec.n_graphs, spec.train_frac, spec.val_frac, spec.seed);
    Dataset::new(graphs, Task::Classification { num_classes: spec.num_classes }, split)
}

/// Marked counts `m` with `m / n` inside the margin-shrunk band of class `k`.
fn marked_count_range(spec: &GeneratorSpec, k: usize, n: usize) -> Option<(usize, usize)> {
    let (blo, bhi) = spec.band(k);
    let pad = spec.band_margin * (bhi - blo);
    let first = libm::ceil((blo + pad) * n as f64) as usize;
    let mut last = libm::floor((bhi - pad) * n as f64) as usize;
    // The band is half-open.
    if last as f64 >= bhi * n as f64 && last > 0 {
        last -= 1;
    }
    (first <= last && last <= n).then_some((first, last))
}

fn classification_graph(spec: &GeneratorSpec, index: usize, class: usize) -> Result<Graph> {
    let mut rng = graph_rng(spec.seed, index);
    let n = rng.gen_range(spec.min_nodes..=spec.max_nodes);
    let comms = communities(n, spec.community_size);
    let edges = planted_edges(n, &comms, spec.intra_degree, &mut rng);

    let (first, last) = marked_count_range(spec, class, n)
        .ok_or_else(|| Error::InfeasibleSpec(format!("no admissible marked count for a {n}-node graph")))?;
    let marked_count = rng.gen_range(first..=last);

    // Weighted sampling without replacement (key u^(1/w)), with community
    // weights Exp(1)^concentration.
    let mut keys: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &(a, b) in &comms {
        let e = -libm::log(1.0 - rng.gen::<f64>());
        let w = libm::pow(e, spec.concentration).max(1e-12);
        for v in a..b {
            let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            keys.push((libm::log(u) / w, v));
        }
    }
    keys.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut marked = vec![false; n];
    for &(_, v) in keys.iter().take(marked_count) {
        marked[v] = true;
    }

    let d = spec.feature_dim;
    let offsets: Vec<Vec<f64>> =
        comms.iter().map(|_| (2..d).map(|_| spec.community_noise * normal(&mut rng)).collect()).collect();
    let mut features = Matrix::zeros(n, d);
    for (c, &(a, b)) in comms.iter().enumerate() {
        for v in a..b {
            let row = features.row_mut(v);
            row[0] = if marked[v] { 1.0 } else { 0.0 };
            row[1] = 1.0;
            for (x, o) in row[2..].iter_mut().zip(&offsets[c]) {
                *x = o + normal(&mut rng);
            }
        }
    }
    let graph = Graph::new(n, &edges, features, Label::Class { class, num_classes: spec.num_classes })?;
    debug_assert_eq!(spec.class_of_fraction(marked_fraction(&graph)), class);
    Ok(graph)
}

/// Share of nodes whose marked indicator (feature 0) is set.
pub fn marked_fraction(graph: &Graph) -> f64 {
    marked_fraction_of(&graph.features)
}

pub fn marked_fraction_of(features: &Matrix) -> f64 {
    if features.rows() == 0 {
        return 0.0;
    }
    let m = (0..features.rows()).filter(|&v| features.get(v, 0) > 0.5).count();
    m as f64 / features.rows() as f64
}

/// Node-level term of the ranking target: `cost · knob²`.
pub fn ranking_node_value(features: &[f64]) -> f64 {
    features[0] * features[1] * features[1]
}

/// Brute-force ranking target of a feature matrix.
pub fn ranking_target(features: &Matrix) -> f64 {
    (0..features.rows()).map(|v| ranking_node_value(features.row(v))).sum()
}

/// Weighted-sum ranking dataset. Graphs `g·c .. (g+1)·c` are the `c`
/// configurations of base graph `g` and share group id `g`.
pub fn generate_ranking(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.check_common()?;
    let c = spec.configs_per_graph;
    if c < 2 {
        return Err(Error::InfeasibleSpec("configs_per_graph must be at least 2".into()));
    }
    if spec.n_graphs % c != 0 {
        return Err(Error::InfeasibleSpec(format!("n_graphs {} is not a multiple of configs_per_graph {c}", spec.n_graphs)));
    }
    if spec.feature_dim < 2 {
        return Err(Error::InfeasibleSpec("feature_dim must be at least 2".into()));
    }
    let bases = spec.n_graphs / c;
    let d = spec.feature_dim;
    let mut graphs = Vec::with_capacity(spec.n_graphs);
    let mut groups = Vec::with_capacity(spec.n_graphs);
    for b in 0..bases {
        let mut rng = graph_rng(spec.seed, b);
        let n = rng.gen_range(spec.min_nodes..=spec.max_nodes);
        let comms = communities(n, spec.community_size);
        let edges = planted_edges(n, &comms, spec.intra_degree, &mut rng);
        let cost: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let noise: Vec<f64> = (0..n * d.saturating_sub(2)).map(|_| normal(&mut rng)).collect();
        let mut levels: Vec<f64> = (0..c).map(|k| (k as f64 + rng.gen::<f64>()) / c as f64).collect();
        levels.shuffle(&mut rng);
        for &level in &levels {
            let mut features = Matrix::zeros(n, d);
            for v in 0..n {
                let row = features.row_mut(v);
                row[0] = cost[v];
                row[1] = (level + 0.3 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0);
                row[2..].copy_from_slice(&noise[v * (d - 2)..(v + 1) * (d - 2)]);
            }
            let target = ranking_target(&features);
            graphs.push(Graph::new(n, &edges, features, Label::Target(target))?.with_group(b as u32));
            groups.push(b as u32);
        }
    }
    let split = Split::by_group(&groups, spec.train_frac, spec.val_frac, spec.seed);
    Dataset::new(graphs, Task::RegressionRanking, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorSpec {
        GeneratorSpec { n_graphs: 20, min_nodes: 100, max_nodes: 400, ..GeneratorSpec::default() }
    }

    #[test]
    fn classification_labels_follow_the_counting_oracle() {
        let spec = GeneratorSpec { num_classes: 2, marked_range: (0.0, 1.0), band_margin: 0.1, ..small() };
        let ds = generate_classification(&spec).unwrap();
        for g in &ds.graphs {
            let f = marked_fraction(g);
            let class = g.label.class().unwrap();
            assert_eq!(spec.class_of_fraction(f), class);
            if class == 0 {
                assert!(f < 0.5 - 0.05 + 1e-12);
            } else {
                assert!(f >= 0.55 - 1e-12);
            }
        }
    }

    #[test]
    fn classes_are_balanced() {
        let spec = GeneratorSpec { n_graphs: 23, ..small() };
        let ds = generate_classification(&spec).unwrap();
        let mut counts = [0usize; 5];
        for g in &ds.graphs {
            counts[g.label.class().unwrap()] += 1;
        }
        let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(max - min <= 1, "{counts:?}");
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_classification(&small()).unwrap();
        let b = generate_classification(&small()).unwrap();
        assert_eq!(a, b);
        let spec = GeneratorSpec { n_graphs: 10, ..GeneratorSpec::ranking() };
        let spec = GeneratorSpec { min_nodes: 50, max_nodes: 120, ..spec };
        assert_eq!(generate_ranking(&spec).unwrap(), generate_ranking(&spec).unwrap());
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let narrow = GeneratorSpec { min_nodes: 5, max_nodes: 5, num_classes: 5, ..small() };
        assert!(matches!(generate_classification(&narrow), Err(Error::InfeasibleSpec(_))));
        let one_class = GeneratorSpec { num_classes: 1, ..small() };
        assert!(generate_classification(&one_class).is_err());
        let bad_configs = GeneratorSpec { configs_per_graph: 1, ..GeneratorSpec::ranking() };
        assert!(generate_ranking(&bad_configs).is_err());
        let uneven = GeneratorSpec { n_graphs: 11, ..GeneratorSpec::ranking() };
        assert!(generate_ranking(&uneven).is_err());
    }

    #[test]
    fn ranking_targets_are_node_sums() {
        let spec = GeneratorSpec { n_graphs: 10, min_nodes: 50, max_nodes: 120, ..GeneratorSpec::ranking() };
        let ds = generate_ranking(&spec).unwrap();
        for g in &ds.graphs {
            let mut brute = 0.0;
            for v in 0..g.node_count() {
                let r = g.features.row(v);
                brute += r[0] * r[1] * r[1];
            }
            assert!((g.label.target().unwrap() - brute).abs() <= 1e-9);
        }
        let groups: Vec<u32> = ds.graphs.iter().map(|g| g.group.unwrap()).collect();
        assert_eq!(groups, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn ranking_split_keeps_groups_together() {
        let spec = GeneratorSpec { n_graphs: 40, min_nodes: 30, max_nodes: 60, ..GeneratorSpec::ranking() };
        let ds = generate_ranking(&spec).unwrap();
        let group = |i: &usize| ds.graphs[*i].group.unwrap();
        for t in &ds.split.test {
            assert!(!ds.split.train.iter().any(|i| group(i) == group(t)));
        }
    }
}
