use alloc::format;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::AdamConfig;
use crate::partition::PartitionMethod;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Whole graph forwarded with gradients.
    Full,
    /// Only the sampled segments, rescaled by J/S.
    GstOne,
    /// Sampled segments with gradients, the rest recomputed without.
    Gst,
    /// Non-sampled segments read from the historical table.
    GstE,
    /// Table plus stale embedding dropout.
    GstEfd,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Full, Variant::GstOne, Variant::Gst, Variant::GstE, Variant::GstEfd];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::GstOne => "gst-one",
            Variant::Gst => "gst",
            Variant::GstE => "gst-e",
            Variant::GstEfd => "gst-efd",
        }
    }

    pub fn uses_table(self) -> bool {
        matches!(self, Variant::GstE | Variant::GstEfd)
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    PairwiseHinge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// `(1/J)·Σ ηⱼ·hⱼ`
    Mean,
    /// `Σ ηⱼ·hⱼ`
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    pub variant: Variant,
    /// Segments trained with gradients per graph (S).
    pub segments_per_graph: usize,
    /// SED keep probability (p).
    pub keep_prob: f64,
    pub max_segment_nodes: usize,
    pub partition_method: PartitionMethod,
    /// Graphs per optimizer step.
    pub batch_size: usize,
    /// Main training epochs (T0).
    pub epochs: usize,
    /// Head-only epochs after the table refresh (T1 − T0).
    pub finetune_epochs: usize,
    pub lr: f64,
    pub finetune_lr: Option<f64>,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub pooling: Pooling,
    /// Retained-activation limit in nodes; `None` disables the check.
    pub budget_nodes: Option<usize>,
    /// Reshuffle batch order every epoch; otherwise graphs are visited in order.
    pub shuffle: bool,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            variant: Variant::GstEfd,
            segments_per_graph: 1,
            keep_prob: 0.5,
            max_segment_nodes: 200,
            partition_method: PartitionMethod::LocalityEdgeCut,
            batch_size: 4,
            epochs: 30,
            finetune_epochs: 10,
            lr: 0.003,
            finetune_lr: None,
            weight_decay: 0.0,
            seed: 0,
            loss: LossKind::CrossEntropy,
            pooling: Pooling::Mean,
            budget_nodes: None,
            shuffle: true,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.segments_per_graph == 0 {
            return Err(Error::InvalidArgument("segments_per_graph must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.keep_prob) {
            return Err(Error::InvalidArgument(format!("keep_prob {} outside [0, 1]", self.keep_prob)));
        }
        if self.batch_size == 0 || self.max_segment_nodes == 0 {
            return Err(Error::InvalidArgument("batch_size and max_segment_nodes must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("lr must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }

    pub fn finetune_adam(&self) -> AdamConfig {
        AdamConfig { lr: self.finetune_lr.unwrap_or(self.lr), ..self.adam() }
    }

    /// Upper bound on retained activations for segment-based variants.
    pub fn segment_budget(&self) -> usize {
        self.batch_size * self.segments_per_graph * self.max_segment_nodes
    }
}
