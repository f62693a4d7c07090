use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use pose2traj::config::RunConfig;
use pose2traj::data::{build_feature_series, make_windows, ms_to_frames, Family, FrameRecord, Player};
use pose2traj::training::{self, load_checkpoint, predict_trajectory, save_checkpoint, write_metrics_csv, Checkpoint};

use crate::error::CliError;
use crate::io::{create, emit, read_bytes, read_records};
use crate::settings::{self, owned};
use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Frame records; families with ball features need gap-filled input.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub family: Option<Family>,
    /// Encoder window length in milliseconds.
    #[arg(long)]
    pub enc_ms: Option<f64>,
    /// Forecast horizon in milliseconds.
    #[arg(long)]
    pub horizon_ms: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seeds both parameter initialization and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Player whose centroid is forecast (1 or 2).
    #[arg(long)]
    pub player: Option<u8>,
    /// Train only on frames with a smaller frame index.
    #[arg(long)]
    pub end_frame: Option<u64>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Metrics log; defaults to the checkpoint path with `.metrics.csv`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

/// Run configuration from defaults, the settings file, `--set` pairs and
/// the dedicated flags, in rising precedence.
pub fn resolve_config(a: &TrainArgs, config: &ConfigArgs, fps: f64) -> Result<RunConfig, CliError> {
    let mut rc = RunConfig::default();
    rc.model.fps = fps;
    let keys: Vec<&str> = rc.to_pairs().into_iter().map(|(k, _)| k).collect();
    rc.apply(&owned(&settings::load(config)?, &keys))?;
    if let Some(f) = a.family {
        rc.model.set("family", &f.to_string())?;
    }
    if let Some(e) = a.epochs {
        rc.train.epochs = e;
    }
    if let Some(s) = a.seed {
        rc.model.seed = s;
        rc.train.shuffle_seed = s;
    }
    if let Some(p) = a.player {
        rc.model.target_player = Player::from_number(p)?;
    }
    if let Some(ms) = a.enc_ms {
        rc.model.enc_len_frames = ms_to_frames(ms, rc.model.fps);
    }
    if let Some(ms) = a.horizon_ms {
        rc.model.horizon_frames = ms_to_frames(ms, rc.model.fps);
    }
    rc.model.validate()?;
    rc.train.validate()?;
    Ok(rc)
}

fn before(records: Vec<FrameRecord>, end: Option<u64>) -> Vec<FrameRecord> {
    match end {
        Some(e) => records.into_iter().filter(|r| r.frame_index < e).collect(),
        None => records,
    }
}

pub fn train(a: TrainArgs, config: &ConfigArgs) -> Result<(), CliError> {
    let file = read_records(&a.input, None)?;
    let fps = file.meta.fps_or_default();
    let size = file.meta.frame_size_or_default();
    let rc = resolve_config(&a, config, fps)?;
    if rc.model.fps != fps {
        log::warn!("config fps {} differs from the data's {fps}", rc.model.fps);
    }
    let records = before(file.records, a.end_frame);
    let series = build_feature_series(&records, rc.model.family, size, fps)?;
    let examples = make_windows(
        &series,
        rc.model.enc_len_frames,
        rc.model.horizon_frames,
        rc.model.target_player,
        rc.train.window_stride,
    )?;
    log::info!(
        "training {} on {} windows from {} frames",
        rc.model.family,
        examples.len(),
        series.len()
    );
    let ck = training::train(&examples, &rc.model, &rc.train)?;

    let mut out = create(&a.checkpoint)?;
    save_checkpoint(&ck, &mut out)?;
    out.flush().map_err(|e| CliError::io(&a.checkpoint, e))?;

    let metrics = a.metrics.clone().unwrap_or_else(|| a.checkpoint.with_extension("metrics.csv"));
    let mut preamble = rc.render("");
    writeln!(preamble, "input={}", a.input.display()).unwrap();
    writeln!(preamble, "frame_size={}x{}", size.width, size.height).unwrap();
    writeln!(preamble, "windows={}", examples.len()).unwrap();
    let mut m = create(&metrics)?;
    write_metrics_csv(&ck.metrics, &preamble, &mut m)
        .and_then(|_| m.flush())
        .map_err(|e| CliError::io(&metrics, e))?;
    if let (Some(first), Some(last)) = (ck.metrics.first(), ck.metrics.last()) {
        log::info!(
            "train mse {:.6} -> {:.6}; wrote {} and {}",
            first.train_mse,
            last.train_mse,
            a.checkpoint.display(),
            metrics.display()
        );
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = read_bytes(path)?;
    load_checkpoint(&bytes[..]).map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Frame index of the last observed frame.
    #[arg(long)]
    pub at_frame: u64,
    /// Defaults to the horizon the model was trained for.
    #[arg(long)]
    pub horizon_ms: Option<f64>,
    /// Trajectory CSV; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn predict(a: PredictArgs) -> Result<(), CliError> {
    let ck = read_checkpoint(&a.checkpoint)?;
    let model = ck.model()?;
    let cfg = &model.config;
    let file = read_records(&a.input, None)?;
    let size = file.meta.frame_size_or_default();
    let series = build_feature_series(&file.records, cfg.family, size, file.meta.fps_or_default())?;
    let pos = series
        .frame_indices
        .iter()
        .position(|&f| f == a.at_frame)
        .ok_or_else(|| CliError::Input(format!("frame {} is not in {}", a.at_frame, a.input.display())))?;
    let horizon = match a.horizon_ms {
        Some(ms) => ms_to_frames(ms, series.fps),
        None => cfg.horizon_frames,
    };
    let out = predict_trajectory(&model, &series.slice(0, pos + 1), horizon)?;
    if out.data().iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numeric("prediction is not finite".into()));
    }

    let rc = RunConfig {
        model: cfg.clone(),
        train: ck.train_config.clone(),
    };
    let mut text = String::new();
    for line in rc.render("").lines() {
        writeln!(text, "# {line}").unwrap();
    }
    writeln!(text, "# checkpoint={}", a.checkpoint.display()).unwrap();
    writeln!(text, "# input={}", a.input.display()).unwrap();
    writeln!(text, "# at_frame={}", a.at_frame).unwrap();
    writeln!(text, "# horizon_frames={horizon}").unwrap();
    writeln!(text, "# frame_size={}x{}", size.width, size.height).unwrap();
    writeln!(text, "step,frame_index,x_px,y_px,truth_x_px,truth_y_px").unwrap();
    for step in 0..=horizon {
        let p = series.denormalize([out.at(step, 0), out.at(step, 1)]);
        let frame = a.at_frame + step as u64;
        let truth = series
            .frame_indices
            .get(pos + step)
            .filter(|&&f| f == frame)
            .map(|_| series.denormalize(series.centroid(cfg.target_player, pos + step)));
        let (tx, ty) = truth.map_or((String::new(), String::new()), |t| (t[0].to_string(), t[1].to_string()));
        writeln!(text, "{step},{frame},{},{},{tx},{ty}", p[0], p[1]).unwrap();
    }
    emit(a.output.as_deref(), &text)
}
