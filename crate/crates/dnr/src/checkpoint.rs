//! JSON model checkpoints.

use std::path::Path;

use dnr_core::dnr::TrainConfig;
use dnr_core::neural::NeuralModel;
use serde::{Deserialize, Serialize};

use crate::error::{DnrError, Result};
use crate::io::{read_json, write_json};

pub const CHECKPOINT_FORMAT: u32 = 1;

/// A trained model with the configuration that produced it. Parameter
/// tensors are stored row-major as 64-bit floats, alongside the optimizer
/// moments so training can resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub seed: u64,
    pub epochs_run: usize,
    pub model: NeuralModel,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, model: NeuralModel, epochs_run: usize) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT,
            seed: config.seed,
            config,
            epochs_run,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_json(path)?;
        if ck.format_version != CHECKPOINT_FORMAT {
            return Err(DnrError::format(
                path,
                0,
                format!("unsupported checkpoint format {}", ck.format_version),
            ));
        }
        ck.model.validate().map_err(|e| DnrError::data(path, e))?;
        Ok(ck)
    }
}
