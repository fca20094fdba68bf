use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams};

pub const CHECKPOINT_FORMAT: &str = "sinsim-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model state. Floats are written with round-trip precision, so a
/// load restores the parameters and optimizer state bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: ModelParams,
    /// Free-form run description, e.g. the serialized run config.
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(params: ModelParams, meta: serde_json::Value) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params,
            meta,
        }
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), ModelError> {
    let text = serde_json::to_string(checkpoint).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let text = fs::read_to_string(path)?;
    let ck: Checkpoint =
        serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!("unknown format {:?}", ck.format)));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "version {} not supported (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    ck.params.check_shapes()?;
    Ok(ck)
}
