//! Teacher-forcing training, checkpoints and autoregressive inference.

mod checkpoint;
mod config;
mod fit;
mod infer;

pub use checkpoint::{
    load_checkpoint, read_directory, read_header, save_checkpoint, Checkpoint, DirectoryEntry,
    FORMAT_VERSION, MAGIC,
};
pub use config::TrainConfig;
pub use fit::{mean_loss, split_validation, train};
pub use infer::{
    min_history, predict_teacher_forced, predict_trajectory, predict_trajectory_with, SlotFill,
};

use std::io::Write;

use crate::autodiff::AutodiffError;
use crate::data::Family;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("no training examples")]
    EmptyDataset,
    #[error("loss became non-finite in epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("example {index}: {message}")]
    InconsistentExample { index: usize, message: String },
    #[error("history has {available} frames, need at least {needed}")]
    HistoryTooShort { needed: usize, available: usize },
    #[error("model was built for family {model}, data is family {data}")]
    FamilyMismatch { model: Family, data: Family },
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads version {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("checkpoint truncated: need {expected} bytes, file has {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("checkpoint tensor directory disagrees with its contents: {0}")]
    ShapeDirectoryMismatch(String),
    #[error("malformed checkpoint header: {0}")]
    BadHeader(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One row of the metrics log. Epoch 0 is the untrained model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

/// Writes `epoch,train_mse,val_mse` rows; an absent validation loss is an
/// empty field. Lines of `preamble` are emitted first, prefixed with `# `.
pub fn write_metrics_csv<W: Write>(
    metrics: &[EpochMetrics],
    preamble: &str,
    mut out: W,
) -> std::io::Result<()> {
    for line in preamble.lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "epoch,train_mse,val_mse")?;
    for m in metrics {
        let val = m.val_mse.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", m.epoch, m.train_mse, val)?;
    }
    Ok(())
}
