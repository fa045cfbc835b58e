//! Versioned JSON checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cells::CellState;
use crate::model::Model;
use crate::numkit::RngState;
use crate::optim::OptState;
use crate::tasks::Vocabulary;

use super::{HarnessError, TrainConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Running mean of training losses since the last evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossMeter {
    pub sum: f64,
    pub count: u64,
}

impl LossMeter {
    pub fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Position in the language-model training stream and the carried states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmCursor {
    pub window: usize,
    pub states: Vec<CellState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub model: Model,
    pub opt: OptState,
    pub rng: RngState,
    pub iteration: u64,
    pub best: Option<f64>,
    pub meter: LossMeter,
    pub lm: Option<LmCursor>,
    pub vocab: Option<Vocabulary>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint fields always serialise")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Checkpoint, HarnessError> {
        let err = |message: String| HarnessError::Checkpoint {
            path: path.into(),
            message,
        };
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| err(format!("unreadable: {e}")))?;
        match probe.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            Some(v) => return Err(err(format!("format version {v}, this build reads {CHECKPOINT_VERSION}"))),
            None => return Err(err("no format version".into())),
        }
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| err(format!("malformed: {e}")))?;
        if !ck.model.is_well_formed() || ck.model.arch() != ck.config.arch || ck.model.hidden() != ck.config.hidden {
            return Err(err("parameters disagree with the stored configuration".into()));
        }
        Ok(ck)
    }
}

/// Writes to a sibling temporary file first so a crash never leaves a
/// partial checkpoint behind.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, ck.to_json()).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Checkpoint {
        path: path.into(),
        message: e.to_string(),
    })?;
    Checkpoint::from_json(&text, path)
}
