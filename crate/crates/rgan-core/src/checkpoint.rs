//! Versioned JSON checkpoints.
//!
//! A checkpoint is a full dump of both players (spec + parameters), both
//! optimizer states, the run seed, the step and the arm name. JSON floats
//! are written in shortest round-trip form, so save → load is exact to the
//! bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{AdamState, Mlp};
use crate::train::TrainState;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub step: u64,
    pub arm: String,
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, arm: &str, seed: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            step: state.step,
            arm: arm.to_string(),
            generator: state.g.clone(),
            discriminator: state.d.clone(),
            adam_g: state.opt_g.clone(),
            adam_d: state.opt_d.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        self.generator
            .params
            .validate_against(&self.generator.spec)
            .map_err(|e| Error::Checkpoint(format!("generator: {e}")))?;
        self.discriminator
            .params
            .validate_against(&self.discriminator.spec)
            .map_err(|e| Error::Checkpoint(format!("discriminator: {e}")))?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("read {}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("parse {}: {e}", path.display())))?;
        ck.validate()?;
        Ok(ck)
    }
}
