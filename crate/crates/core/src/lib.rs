//! Forecasting a tennis player's future centroid trajectory from past
//! centroids, body joints and ball positions.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`]: tensors, a define-by-run reverse-mode graph, Adam.
//! - [`data`]: frame records, ball-gap repair, feature series, training windows,
//!   synthetic rallies.
//! - [`time2vec`]: the learnable time embedding attached to both input streams.
//! - [`model`]: the encoder-decoder Transformer with recurrent smoothing head.
//! - [`training`]: teacher-forcing training, checkpoints, autoregressive inference.
//! - [`eval`]: the MEDE metric, baselines, evaluation grid and reports.
//! - [`config`]: flat `key=value` configuration files.

pub mod autodiff;
pub mod data;
pub mod config;
pub mod model;
pub mod time2vec;
pub mod training;
pub mod eval;
