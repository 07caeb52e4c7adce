//! Checkpoints: the complete trainer state (parameters, optimizer moments,
//! embedding table, random streams and counters) as JSON.

use std::fs;
use std::path::Path;

use segtrain_core::engine::TrainerState;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub dataset_hash: String,
    pub state: TrainerState,
}

pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let mut bytes = serde_json::to_vec(checkpoint).expect("trainer state serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e))
}
