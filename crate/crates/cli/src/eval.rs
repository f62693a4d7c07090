use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use clap::Args;
use pose2traj::config::RunConfig;
use pose2traj::data::{build_feature_series, Family};
use pose2traj::eval::{
    emit_report, evaluate_grid, parse_report, write_axis_trace, Axis, GridModel, GridSpec, Mode,
    ReportFormat,
};
use pose2traj::model::Model;

use crate::error::CliError;
use crate::io::{create, emit, read_records};
use crate::train::read_checkpoint;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Gap-filled frame records to evaluate on.
    #[arg(long)]
    pub input: PathBuf,
    /// A trained checkpoint. Repeatable.
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    /// Directory whose `*.ckpt` files are all loaded.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// `table` or e.g. `families=F1,F4;train_ms=500;horizons_ms=500,1000`.
    #[arg(long, default_value = "table")]
    pub grid: GridSpec,
    #[arg(long, default_value_t = Mode::Autoregressive)]
    pub mode: Mode,
    /// Evaluate only frames with at least this frame index.
    #[arg(long)]
    pub start_frame: Option<u64>,
    #[arg(long, default_value = "csv")]
    pub format: ReportFormat,
    /// Result table; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write predicted-vs-truth traces to `<PREFIX>.x.csv` and
    /// `<PREFIX>.y.csv`.
    #[arg(long, value_name = "PREFIX")]
    pub traces: Option<PathBuf>,
}

fn checkpoint_paths(a: &EvaluateArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = a.checkpoint.clone();
    if let Some(dir) = &a.checkpoint_dir {
        let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
            .collect();
        found.sort();
        paths.extend(found);
    }
    if paths.is_empty() {
        return Err(CliError::Missing("no checkpoints given".into()));
    }
    Ok(paths)
}

pub fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let file = read_records(&a.input, None)?;
    let size = file.meta.frame_size_or_default();
    let fps = file.meta.fps_or_default();
    let records: Vec<_> = file
        .records
        .into_iter()
        .filter(|r| a.start_frame.map_or(true, |s| r.frame_index >= s))
        .collect();

    let mut preamble = String::new();
    writeln!(preamble, "input={}", a.input.display()).unwrap();
    if let Some(s) = a.start_frame {
        writeln!(preamble, "start_frame={s}").unwrap();
    }
    writeln!(preamble, "frame_size={}x{}", size.width, size.height).unwrap();
    writeln!(preamble, "fps={fps}").unwrap();
    writeln!(preamble, "mode={}", a.mode).unwrap();
    writeln!(preamble, "grid={}", a.grid).unwrap();
    writeln!(
        preamble,
        "protocol=non-overlapping windows with stride equal to the horizon, from the first frame with enough history; mede_px averages per-window mean distances"
    )
    .unwrap();

    let mut models: Vec<(Family, u32, Model)> = Vec::new();
    for path in checkpoint_paths(&a)? {
        let ck = read_checkpoint(&path)?;
        let model = ck.model()?;
        let c = &model.config;
        let train_ms = (c.enc_len_frames as f64 * 1000.0 / c.fps).round() as u32;
        if models.iter().any(|(f, t, _)| *f == c.family && *t == train_ms) {
            return Err(CliError::Input(format!(
                "{}: a second checkpoint for {} at {train_ms} ms",
                path.display(),
                c.family
            )));
        }
        let tag = format!("{}.{train_ms}", c.family);
        writeln!(preamble, "checkpoint.{tag}={}", path.display()).unwrap();
        let rc = RunConfig {
            model: c.clone(),
            train: ck.train_config.clone(),
        };
        preamble.push_str(&rc.render(&format!("{tag}.")));
        models.push((c.family, train_ms, model));
    }

    let mut series = BTreeMap::new();
    for &family in &a.grid.families {
        series.insert(family, build_feature_series(&records, family, size, fps)?);
    }
    let grid_models: Vec<GridModel> = models
        .iter()
        .map(|(family, train_ms, m)| GridModel {
            family: *family,
            train_ms: *train_ms,
            forecaster: m,
        })
        .collect();
    let cells = evaluate_grid(&grid_models, &series, &a.grid, a.mode)?;
    let results: Vec<_> = cells.iter().map(|(r, _)| r.clone()).collect();
    log::info!("evaluated {} cells", results.len());

    if let Some(prefix) = &a.traces {
        for (axis, tag) in [(Axis::X, "x"), (Axis::Y, "y")] {
            let mut name = prefix.clone().into_os_string();
            name.push(format!(".{tag}.csv"));
            let path = PathBuf::from(name);
            let mut out = create(&path)?;
            write_axis_trace(&cells, axis, &preamble, &mut out)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io(&path, e))?;
        }
    }
    emit(a.output.as_deref(), &emit_report(&results, a.format, &preamble))
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// A CSV or JSON table written by `evaluate` or `report`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "md")]
    pub format: ReportFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn report(a: ReportArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let (results, preamble) =
        parse_report(&text).map_err(|e| CliError::from(e).context(&a.input.display().to_string()))?;
    if results.is_empty() {
        return Err(CliError::Input(format!("{}: the table is empty", a.input.display())));
    }
    emit(a.output.as_deref(), &emit_report(&results, a.format, &preamble))
}
