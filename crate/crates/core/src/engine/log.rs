use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::table::StalenessStats;

/// Deterministic work counters, in graph nodes pushed through the backbone
/// or table entries touched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub steps: u64,
    /// Nodes forwarded with gradients enabled.
    pub grad_nodes: u64,
    /// Nodes forwarded without gradients to replace non-selected segments.
    pub nograd_nodes: u64,
    /// Nodes forwarded without gradients to fill missing table entries.
    pub warmup_nodes: u64,
    pub lookups: u64,
    /// Stale embeddings dropped before their lookup.
    pub skipped_lookups: u64,
}

impl OpCounters {
    pub fn add(&mut self, other: &OpCounters) {
        self.steps += other.steps;
        self.grad_nodes += other.grad_nodes;
        self.nograd_nodes += other.nograd_nodes;
        self.warmup_nodes += other.warmup_nodes;
        self.lookups += other.lookups;
        self.skipped_lookups += other.skipped_lookups;
    }

    pub fn since(&self, earlier: &OpCounters) -> OpCounters {
        OpCounters {
            steps: self.steps - earlier.steps,
            grad_nodes: self.grad_nodes - earlier.grad_nodes,
            nograd_nodes: self.nograd_nodes - earlier.nograd_nodes,
            warmup_nodes: self.warmup_nodes - earlier.warmup_nodes,
            lookups: self.lookups - earlier.lookups,
            skipped_lookups: self.skipped_lookups - earlier.skipped_lookups,
        }
    }

    /// Work beyond the gradient segments: recomputed nodes plus table reads.
    pub fn extra_work(&self) -> u64 {
        self.nograd_nodes + self.lookups
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub loss: f64,
    pub graphs: usize,
    pub counters: OpCounters,
    /// Activations held by the tape at backward time, in nodes.
    pub retained_nodes: usize,
    /// Classification only: graphs whose argmax matched the label.
    pub correct: usize,
    /// Ranking only: `(prediction, target, group)` per graph.
    pub ranked: Vec<(f64, f64, u32)>,
    /// `(graph, segment, staleness)` for every table read.
    pub lookups: Vec<(usize, usize, u64)>,
    /// `(graph, segment)` of every segment forwarded with gradients.
    pub grad_segments: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Train,
    Finetune,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StalenessTrace {
    pub sampled: usize,
    pub max_distance: f64,
    pub mean_distance: f64,
    pub max_staleness: u64,
    pub mean_staleness: f64,
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub iteration: u64,
    pub loss: f64,
    /// Accuracy or OPA of the predictions made during the training steps.
    pub train_metric: Option<f64>,
    pub val_metric: Option<f64>,
    pub test_metric: Option<f64>,
    pub counters: OpCounters,
    pub peak_retained_nodes: usize,
    pub staleness: Option<StalenessStats>,
    pub trace: Option<StalenessTrace>,
    pub wall_ms: Option<f64>,
}
