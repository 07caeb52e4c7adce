//! Graph segment training: train whole-graph property predictors on large
//! graphs under a fixed activation budget by backpropagating through a few
//! sampled segments per graph and reusing historical embeddings for the rest.
//!
//! This crate is `no_std` (it needs `alloc`). File formats, threading and the
//! command line live in the `segtrain` crate.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod autodiff;
pub mod engine;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod params;
pub mod partition;
pub mod rng;
pub mod synth;
pub mod table;
pub mod tensor;

pub use engine::{LossKind, Pooling, TrainPlan, Trainer, Variant};
pub use error::{Error, Result};
pub use graph::{Adjacency, Dataset, Graph, Label, Split, Task};
pub use model::{Model, ModelConfig};
pub use partition::{partition, PartitionMethod, Segment, SegmentedGraph};
pub use table::EmbeddingTable;
