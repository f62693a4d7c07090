use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Checkpoint, EpochMetrics, TrainConfig, TrainError, FORMAT_VERSION};
use crate::autodiff::{adam_step, clip_grad_norm, AdamState, Graph, Var};
use crate::data::TrainingExample;
use crate::model::{Model, ModelConfig};

/// Splits off the validation tail: `⌊n·fraction⌋` examples, leaving at
/// least one for training.
pub fn split_validation(
    examples: &[TrainingExample],
    fraction: f64,
) -> (&[TrainingExample], &[TrainingExample]) {
    let n = examples.len();
    let n_val = ((n as f64 * fraction).floor() as usize).min(n.saturating_sub(1));
    examples.split_at(n - n_val)
}

fn check_examples(examples: &[TrainingExample], cfg: &ModelConfig) -> Result<(), TrainError> {
    let d = cfg.family.feature_dim();
    for (i, ex) in examples.iter().enumerate() {
        let ok = ex.enc_in.shape() == [cfg.enc_len_frames, d]
            && ex.dec_in.shape() == [cfg.horizon_frames + 1, 2]
            && ex.target.shape() == [cfg.horizon_frames + 1, 2]
            && ex.enc_times.len() == cfg.enc_len_frames
            && ex.dec_times.len() == cfg.horizon_frames + 1;
        if !ok {
            return Err(TrainError::InconsistentExample {
                index: i,
                message: format!(
                    "encoder {:?}, decoder {:?}, target {:?}; config wants {}×{d} and {}×2",
                    ex.enc_in.shape(),
                    ex.dec_in.shape(),
                    ex.target.shape(),
                    cfg.enc_len_frames,
                    cfg.horizon_frames + 1
                ),
            });
        }
    }
    Ok(())
}

/// Squared error of one example, averaged over its `(h+1) × 2` outputs.
fn example_loss(
    model: &Model,
    g: &mut Graph,
    vars: &[Var],
    ex: &TrainingExample,
) -> Result<Var, TrainError> {
    let e = g.constant(ex.enc_in.clone());
    let d = g.constant(ex.dec_in.clone());
    let t = g.constant(ex.target.clone());
    let out = model.forward(g, vars, e, &ex.enc_times, d, &ex.dec_times)?;
    let diff = g.sub(out, t)?;
    let sq = g.square(diff);
    Ok(g.mean(sq))
}

/// Evaluation-mode mean squared error over `examples` (normalized units).
/// Returns `None` for an empty list.
pub fn mean_loss(model: &Model, examples: &[TrainingExample]) -> Result<Option<f64>, TrainError> {
    if examples.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for ex in examples {
        let mut g = Graph::new();
        let vars = model.bind(&mut g, false);
        let l = example_loss(model, &mut g, &vars, ex)?;
        total += g.value(l).item();
    }
    Ok(Some(total / examples.len() as f64))
}

fn batch_seed(model_seed: u64, epoch: usize, batch: usize) -> u64 {
    model_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((epoch as u64) << 32)
        .wrapping_add(batch as u64)
}

/// Teacher-forcing training with MSE loss and Adam.
///
/// The last `validation_fraction` of `examples` is held out. The metrics log
/// starts with epoch 0, the untrained model in evaluation mode, followed by
/// one row per epoch: the mean training batch loss (with dropout active) and
/// the evaluation-mode validation loss.
pub fn train(
    examples: &[TrainingExample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<Checkpoint, TrainError> {
    model_config.validate()?;
    train_config.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    check_examples(examples, model_config)?;
    let (train_set, val_set) = split_validation(examples, train_config.validation_fraction);
    let mut model = Model::new(model_config.clone())?;
    let mut adam = AdamState::new(model.params.tensors());
    let adam_cfg = train_config.adam();

    let mut metrics = vec![EpochMetrics {
        epoch: 0,
        train_mse: mean_loss(&model, train_set)?.expect("non-empty"),
        val_mse: mean_loss(&model, val_set)?,
    }];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.shuffle_seed);

    for epoch in 1..=train_config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, chunk) in order.chunks(train_config.batch_size).enumerate() {
            let mut g = Graph::training(batch_seed(model_config.seed, epoch, b));
            let vars = model.bind(&mut g, true);
            let mut total: Option<Var> = None;
            for &i in chunk {
                let l = example_loss(&model, &mut g, &vars, &train_set[i])?;
                total = Some(match total {
                    Some(t) => g.add(t, l)?,
                    None => l,
                });
            }
            let loss = g.scale(total.expect("non-empty batch"), 1.0 / chunk.len() as f64);
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(TrainError::DivergedLoss { epoch, batch: b });
            }
            g.backward(loss)?;
            for (p, v) in model.params.tensors_mut().iter_mut().zip(&vars) {
                let grad = g.grad(*v).map_or_else(|| vec![0.0; p.numel()], <[f64]>::to_vec);
                p.set_grad(grad)?;
            }
            if train_config.grad_clip > 0.0 {
                clip_grad_norm(model.params.tensors_mut(), train_config.grad_clip);
            }
            adam_step(model.params.tensors_mut(), &mut adam, &adam_cfg)?;
            sum += value * chunk.len() as f64;
        }
        let row = EpochMetrics {
            epoch,
            train_mse: sum / train_set.len() as f64,
            val_mse: mean_loss(&model, val_set)?,
        };
        match row.val_mse {
            Some(v) => log::info!("epoch {epoch}: train {:.6e} val {v:.6e}", row.train_mse),
            None => log::info!("epoch {epoch}: train {:.6e}", row.train_mse),
        }
        metrics.push(row);
    }
    Ok(Checkpoint {
        format_version: FORMAT_VERSION,
        model_config: model.config.clone(),
        train_config: train_config.clone(),
        params: model.params,
        adam: Some(adam),
        epoch: train_config.epochs,
        metrics,
    })
}
