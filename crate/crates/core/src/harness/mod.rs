//! Experiment runner: configuration, the training loop, evaluation,
//! checkpoints, learning curves and memory-state heat maps.

mod checkpoint;
mod config;
mod heatmap;
mod train;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::cells::CellError;
use crate::grad::GradError;
use crate::tasks::TaskError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, LmCursor, LossMeter, CHECKPOINT_VERSION};
pub use config::{parse_key_values, parity_warning, table_size, table_width, TrainConfig};
pub use heatmap::{export_heatmap, memory_grids, rank_neurons, write_grid, Grid, NeuronScore};
pub use train::{
    evaluate, evaluate_checkpoint, resume_training, run_seeds, run_training, CurvePoint, RunSummary, SeedSummary,
    Trainer,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("diverged at iteration {iteration}: {reason}; last finite state saved to {checkpoint}")]
    Divergence {
        iteration: u64,
        reason: String,
        checkpoint: PathBuf,
    },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl HarnessError {
    /// Process exit code: 2 configuration, 3 data, 4 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) | HarnessError::Checkpoint { .. } | HarnessError::Io { .. } => 3,
            HarnessError::Divergence { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<TaskError> for HarnessError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::TooSmall { .. } => HarnessError::Config(e.to_string()),
            other => HarnessError::Data(other.to_string()),
        }
    }
}

impl From<CellError> for HarnessError {
    fn from(e: CellError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<GradError> for HarnessError {
    fn from(e: GradError) -> Self {
        HarnessError::Data(e.to_string())
    }
}
