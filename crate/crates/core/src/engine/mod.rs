//! Training loops for full-graph and segment training, stale embedding
//! dropout, and head finetuning.

mod log;
mod plan;
mod sed;
mod trainer;

pub use log::{EpochRecord, OpCounters, Phase, StalenessTrace, StepStats};
pub use plan::{LossKind, Pooling, TrainPlan, Variant};
pub use sed::{aggregate, gradient_segment_weight, sample_segments, sed_weights, SedAssignment};
pub use trainer::{prepare_segments, Embedder, EvalResult, RunData, Trainer, TrainerState};
