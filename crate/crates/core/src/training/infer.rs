use crate::autodiff::Tensor;
use crate::data::{FeatureSeries, TrainingExample, WindowLayout};
use crate::model::Model;

use super::TrainError;

/// How decoder slots for not-yet-predicted times start out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SlotFill {
    /// Repeat the last known centroid.
    #[default]
    LastKnown,
    Zeros,
}

/// Smallest history that [`predict_trajectory`] accepts for a horizon.
///
/// Unmasked models first decode at `t - ⌊h/2⌋`, so they need `⌊h/2⌋` more
/// encoder frames and a full horizon of decoder history.
pub fn min_history(model: &Model, horizon: usize) -> usize {
    let enc = model.config.enc_len_frames;
    if model.config.use_decoder_mask {
        enc.max(horizon.div_ceil(2) + 1)
    } else {
        (enc + horizon / 2).max(horizon + 1)
    }
}

/// Forecasts the target player's centroid for the `horizon + 1` frames
/// starting at the last history frame `t`, in normalized coordinates.
///
/// Decoder slots at or before `t` come from the history. With the decoder
/// mask, the slot for time `t + j` is filled with output row `j` of a first
/// pass and a second pass gives the result; this is exact, since no row
/// attends to a slot that is still unfilled.
///
/// Without the mask every row sees every slot, and training taught the
/// model to read the future half of the decoder input. Both passes are
/// therefore run on fully known inputs: a first one anchored at
/// `t - ⌊h/2⌋`, where all slots are history, yields times `t + 1 ..=
/// t + ⌈h/2⌉` as its last rows; these fill the future slots of the second
/// pass anchored at `t`.
pub fn predict_trajectory(
    model: &Model,
    history: &FeatureSeries,
    horizon: usize,
) -> Result<Tensor, TrainError> {
    predict_trajectory_with(model, history, horizon, SlotFill::LastKnown)
}

/// [`predict_trajectory`] with a choice of placeholder for unknown slots.
/// The result does not depend on it; it exists to demonstrate that.
pub fn predict_trajectory_with(
    model: &Model,
    history: &FeatureSeries,
    horizon: usize,
    fill: SlotFill,
) -> Result<Tensor, TrainError> {
    let cfg = &model.config;
    if history.family != cfg.family {
        return Err(TrainError::FamilyMismatch {
            model: cfg.family,
            data: history.family,
        });
    }
    if horizon == 0 {
        return Err(TrainError::InvalidConfig("horizon must be positive".into()));
    }
    let needed = min_history(model, horizon);
    if history.len() < needed {
        return Err(TrainError::HistoryTooShort {
            needed,
            available: history.len(),
        });
    }
    if horizon > cfg.horizon_frames {
        log::warn!(
            "horizon {horizon} exceeds the trained horizon {}; output is out of distribution",
            cfg.horizon_frames
        );
    }
    let t = history.len() - 1;
    let back = horizon.div_ceil(2);
    let ahead = horizon - back;

    if cfg.use_decoder_mask || ahead == 0 {
        let mut w = Inputs::at(model, history, t, horizon, fill)?;
        let out = w.predict(model)?;
        if ahead == 0 {
            return Ok(out);
        }
        for j in 1..=ahead {
            w.set_slot(WindowLayout::slot_for_step(horizon, j), out.row(j));
        }
        return w.predict(model);
    }
    let first = Inputs::at(model, history, t - ahead, horizon, fill)?.predict(model)?;
    let mut w = Inputs::at(model, history, t, horizon, fill)?;
    for j in 1..=ahead {
        // row `ahead + j` of the earlier pass is time `t + j`
        w.set_slot(WindowLayout::slot_for_step(horizon, j), first.row(ahead + j));
    }
    w.predict(model)
}

/// Model inputs for the window anchored at history position `anchor`.
/// Decoder slots inside the history are always taken from it.
struct Inputs {
    enc_in: Tensor,
    enc_times: Vec<f64>,
    dec_in: Tensor,
    dec_times: Vec<f64>,
}

impl Inputs {
    fn at(
        model: &Model,
        history: &FeatureSeries,
        anchor: usize,
        horizon: usize,
        fill: SlotFill,
    ) -> Result<Self, TrainError> {
        let cfg = &model.config;
        let enc_len = cfg.enc_len_frames;
        let enc_start = anchor + 1 - enc_len;
        let d = history.feature_dim();
        let enc_in = Tensor::matrix(
            enc_len,
            d,
            history.matrix()[enc_start * d..(anchor + 1) * d].to_vec(),
        )?;
        let time = |pos: usize| (pos as f64 - enc_start as f64) / history.fps;
        let enc_times = (enc_start..=anchor).map(time).collect();

        let first = anchor - horizon.div_ceil(2);
        let dec_times = (0..=horizon).map(|i| time(first + i)).collect();
        let player = cfg.target_player;
        let last = history.centroid(player, history.len() - 1);
        let mut dec = Vec::with_capacity((horizon + 1) * 2);
        for p in first..=first + horizon {
            let v = if p < history.len() {
                history.centroid(player, p)
            } else {
                match fill {
                    SlotFill::LastKnown => last,
                    SlotFill::Zeros => [0.0, 0.0],
                }
            };
            dec.extend_from_slice(&v);
        }
        Ok(Inputs {
            enc_in,
            enc_times,
            dec_in: Tensor::matrix(horizon + 1, 2, dec)?,
            dec_times,
        })
    }

    fn set_slot(&mut self, slot: usize, value: &[f64]) {
        self.dec_in.data_mut()[slot * 2..slot * 2 + 2].copy_from_slice(value);
    }

    fn predict(&self, model: &Model) -> Result<Tensor, TrainError> {
        Ok(model.predict(&self.enc_in, &self.enc_times, &self.dec_in, &self.dec_times)?)
    }
}

/// Prediction with ground-truth decoder inputs, as seen during training.
pub fn predict_teacher_forced(model: &Model, ex: &TrainingExample) -> Result<Tensor, TrainError> {
    Ok(model.predict(&ex.enc_in, &ex.enc_times, &ex.dec_in, &ex.dec_times)?)
}
