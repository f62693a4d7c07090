//! Error metric, baselines and the evaluation grid.
//!
//! ```
//! use pose2traj::eval::mede;
//!
//! let truth = [[0.0, 0.0], [0.0, 0.0]];
//! let pred = [[3.0, 4.0], [0.0, 0.0]];
//! assert_eq!(mede(&truth, &pred).unwrap(), 2.5);
//! ```

mod grid;
mod report;

pub use grid::{
    evaluate_cell, evaluate_grid, evaluate_windows, CellOutcome, Forecaster, GridModel, GridSpec, Oracle,
    Persistence, TracePoint, TABLE_HORIZONS_MS, TABLE_TRAIN_MS,
};
pub use report::{
    emit_report, parse_report, parse_report_csv, parse_report_json, write_axis_trace, Axis, ReportFormat,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DataError, Family, Point};
use crate::training::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("truth has {truth} points, prediction has {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("no checkpoint for family {family} trained on {train_ms} ms")]
    MissingCheckpoint { family: Family, train_ms: u32 },
    #[error("no series for family {0}")]
    MissingSeries(Family),
    #[error("series of {available} frames is too short; need {needed}")]
    SeriesTooShort { needed: usize, available: usize },
    #[error("non-finite prediction")]
    NonFinite,
    #[error("report parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mean Euclidean distance between paired points.
pub fn mede(truth: &[Point], pred: &[Point]) -> Result<f64, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::EmptySequence);
    }
    let sum: f64 = truth
        .iter()
        .zip(pred)
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
        .sum();
    Ok(sum / truth.len() as f64)
}

/// The last observed centroid repeated for `horizon + 1` steps.
pub fn persistence_baseline(last: Point, horizon: usize) -> Vec<Point> {
    vec![last; horizon + 1]
}

/// Sum of absolute step-to-step changes over both axes.
pub fn total_variation(points: &[Point]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).abs() + (w[1][1] - w[0][1]).abs())
        .sum()
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Future decoder inputs come from the model's own outputs.
    #[default]
    Autoregressive,
    /// Future decoder inputs are ground truth, as in training.
    TeacherForced,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Autoregressive => "autoregressive",
            Mode::TeacherForced => "teacher_forced",
        })
    }
}

impl FromStr for Mode {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "autoregressive" => Ok(Mode::Autoregressive),
            "teacher_forced" => Ok(Mode::TeacherForced),
            _ => Err(EvalError::Parse(format!("unknown mode `{s}`"))),
        }
    }
}

/// One cell of the evaluation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub family: Family,
    pub train_ms: u32,
    pub horizon_ms: u32,
    pub mede_px: f64,
    pub n_windows: usize,
    pub mode: Mode,
}
