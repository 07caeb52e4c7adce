//! Dataset files, segment caching, checkpoints, threaded embedding and the
//! experiment runner behind the `segtrain` command. The training algorithms
//! live in `segtrain-core`.

pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod parallel;
pub mod runner;

pub use config::{DatasetSource, ExperimentConfig, ModelSpec, Overrides};
pub use error::{Error, Result};
pub use runner::{run, RunOptions, RunOutcome, Summary};
