//! Versioned parameter checkpoints: a JSON map of
//! `name -> {shape, data}` sorted by name for stable diffs.

use super::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error reading/writing checkpoint: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: BTreeMap<String, Tensor>,
}

pub fn save_checkpoint(path: &Path, params: &BTreeMap<String, Tensor>) -> Result<(), CheckpointError> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        params: params.clone(),
    };
    let json = serde_json::to_string(&ckpt)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<BTreeMap<String, Tensor>, CheckpointError> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: ckpt.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    Ok(ckpt.params)
}
