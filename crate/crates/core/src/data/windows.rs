use std::ops::RangeInclusive;

use super::{DataError, FeatureSeries, Player};
use crate::autodiff::Tensor;

/// Index layout of one window, as inclusive 0-based series positions.
///
/// For an encoder window ending at `t` and a horizon `h`, the decoder reads
/// the target player's centroid over `[t − ⌈h/2⌉, t + ⌊h/2⌋]` and is trained
/// to emit `[t, t + h]`. Both spans have `h + 1` positions; the first
/// `⌈h/2⌉` target positions overlap the end of the encoder window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowLayout {
    pub encoder: RangeInclusive<usize>,
    pub decoder_input: RangeInclusive<usize>,
    pub target: RangeInclusive<usize>,
}

impl WindowLayout {
    /// Layout for an encoder window ending at `anchor`. Returns `None` when a
    /// span would start before position 0.
    pub fn at(anchor: usize, enc_len: usize, horizon: usize) -> Option<Self> {
        let back = horizon.div_ceil(2);
        let fwd = horizon / 2;
        if enc_len == 0 || anchor + 1 < enc_len || anchor < back {
            return None;
        }
        Some(WindowLayout {
            encoder: anchor + 1 - enc_len..=anchor,
            decoder_input: anchor - back..=anchor + fwd,
            target: anchor..=anchor + horizon,
        })
    }

    /// Decoder input slot holding the value for time `anchor + j`.
    pub fn slot_for_step(horizon: usize, j: usize) -> usize {
        j + horizon.div_ceil(2)
    }

    /// First position the encoder and decoder spans can both start at.
    pub fn first_anchor(enc_len: usize, horizon: usize) -> usize {
        (enc_len.max(1) - 1).max(horizon.div_ceil(2))
    }
}

/// One teacher-forcing instance.
///
/// `enc_in` is `T_enc × D` normalized features, `dec_in` and `target` are
/// `(h+1) × 2` target-player centroids. Times are seconds measured from the
/// first encoder frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub enc_in: Tensor,
    pub enc_times: Vec<f64>,
    pub dec_in: Tensor,
    pub dec_times: Vec<f64>,
    pub target: Tensor,
    pub target_player: Player,
    /// Series position of the last encoder frame.
    pub anchor: usize,
}

impl TrainingExample {
    pub fn horizon(&self) -> usize {
        self.target.rows() - 1
    }
}

/// Cuts the example whose encoder window ends at `anchor`.
pub fn example_at(
    series: &FeatureSeries,
    anchor: usize,
    enc_len: usize,
    horizon: usize,
    target_player: Player,
) -> Result<TrainingExample, DataError> {
    let layout = WindowLayout::at(anchor, enc_len, horizon)
        .filter(|l| *l.target.end() < series.len())
        .ok_or(DataError::SeriesTooShort {
            needed: (WindowLayout::first_anchor(enc_len, horizon) + horizon + 1)
                .max(anchor + horizon + 1),
            available: series.len(),
        })?;
    let d = series.feature_dim();
    let enc_start = *layout.encoder.start();
    let enc_data = series.matrix()[enc_start * d..(layout.encoder.end() + 1) * d].to_vec();
    let time = |pos: usize| (pos as f64 - enc_start as f64) / series.fps;
    let centroids = |range: &RangeInclusive<usize>| -> Vec<f64> {
        range
            .clone()
            .flat_map(|p| series.centroid(target_player, p))
            .collect()
    };
    let rows = horizon + 1;
    Ok(TrainingExample {
        enc_in: Tensor::matrix(enc_len, d, enc_data).expect("encoder slice"),
        enc_times: layout.encoder.clone().map(time).collect(),
        dec_in: Tensor::matrix(rows, 2, centroids(&layout.decoder_input)).expect("decoder slice"),
        dec_times: layout.decoder_input.clone().map(time).collect(),
        target: Tensor::matrix(rows, 2, centroids(&layout.target)).expect("target slice"),
        target_player,
        anchor,
    })
}

/// All windows of a series with the given stride, in anchor order.
///
/// With `enc_len > ⌈h/2⌉` (always true when `enc_len ≥ h ≥ 2`) and stride 1
/// this yields `N − enc_len − h + 1` examples for a series of length `N`.
pub fn make_windows(
    series: &FeatureSeries,
    enc_len: usize,
    horizon: usize,
    target_player: Player,
    stride: usize,
) -> Result<Vec<TrainingExample>, DataError> {
    if enc_len == 0 || horizon == 0 || stride == 0 {
        return Err(DataError::InvalidParams(
            "encoder length, horizon and stride must be positive".into(),
        ));
    }
    let first = WindowLayout::first_anchor(enc_len, horizon);
    if first + horizon >= series.len() {
        return Err(DataError::SeriesTooShort {
            needed: first + horizon + 1,
            available: series.len(),
        });
    }
    (first..series.len() - horizon)
        .step_by(stride)
        .map(|anchor| example_at(series, anchor, enc_len, horizon, target_player))
        .collect()
}
