use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{mede, persistence_baseline, EvalError, EvalResult, Mode};
use crate::data::{example_at, ms_to_frames, Family, FeatureSeries, Player, Point, WindowLayout};
use crate::model::Model;
use crate::training::{min_history, predict_trajectory};

/// Encoder window lengths of the reference grid, in milliseconds.
pub const TABLE_TRAIN_MS: [u32; 3] = [500, 750, 1000];
/// Forecast horizons of the reference grid, in milliseconds.
pub const TABLE_HORIZONS_MS: [u32; 7] = [50, 100, 150, 200, 250, 500, 1000];

/// Anything that forecasts a centroid trajectory from a series prefix.
pub trait Forecaster {
    fn player(&self) -> Player;

    /// Frames needed up to and including the anchor.
    fn min_history(&self, horizon: usize) -> usize;

    /// Normalized centroids for `anchor ..= anchor + horizon`. Only
    /// [`Mode::TeacherForced`] may read rows after `anchor`.
    fn forecast(
        &self,
        series: &FeatureSeries,
        anchor: usize,
        horizon: usize,
        mode: Mode,
    ) -> Result<Vec<Point>, EvalError>;
}

fn rows_to_points(rows: &[f64]) -> Vec<Point> {
    rows.chunks(2).map(|c| [c[0], c[1]]).collect()
}

impl Forecaster for Model {
    fn player(&self) -> Player {
        self.config.target_player
    }

    fn min_history(&self, horizon: usize) -> usize {
        min_history(self, horizon)
    }

    fn forecast(
        &self,
        series: &FeatureSeries,
        anchor: usize,
        horizon: usize,
        mode: Mode,
    ) -> Result<Vec<Point>, EvalError> {
        let out = match mode {
            Mode::Autoregressive => {
                let start = anchor + 1 - min_history(self, horizon);
                predict_trajectory(self, &series.slice(start, anchor + 1), horizon)?
            }
            Mode::TeacherForced => {
                let ex = example_at(
                    series,
                    anchor,
                    self.config.enc_len_frames,
                    horizon,
                    self.config.target_player,
                )?;
                self.predict(&ex.enc_in, &ex.enc_times, &ex.dec_in, &ex.dec_times)
                    .map_err(crate::training::TrainError::from)?
            }
        };
        Ok(rows_to_points(out.data()))
    }
}

/// Repeats the last observed centroid.
#[derive(Clone, Copy, Debug)]
pub struct Persistence(pub Player);

impl Forecaster for Persistence {
    fn player(&self) -> Player {
        self.0
    }

    fn min_history(&self, _horizon: usize) -> usize {
        1
    }

    fn forecast(
        &self,
        series: &FeatureSeries,
        anchor: usize,
        horizon: usize,
        _mode: Mode,
    ) -> Result<Vec<Point>, EvalError> {
        Ok(persistence_baseline(series.centroid(self.0, anchor), horizon))
    }
}

/// Returns the ground truth; a sanity reference with zero error.
#[derive(Clone, Copy, Debug)]
pub struct Oracle(pub Player);

impl Forecaster for Oracle {
    fn player(&self) -> Player {
        self.0
    }

    fn min_history(&self, _horizon: usize) -> usize {
        1
    }

    fn forecast(
        &self,
        series: &FeatureSeries,
        anchor: usize,
        horizon: usize,
        _mode: Mode,
    ) -> Result<Vec<Point>, EvalError> {
        Ok((anchor..=anchor + horizon)
            .map(|p| series.centroid(self.0, p))
            .collect())
    }
}

/// One predicted-vs-truth sample, in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    /// Index of the evaluation window within its cell.
    pub window: usize,
    /// Frame index from the source series.
    pub frame: u64,
    /// Steps after the window anchor.
    pub step: usize,
    pub truth: Point,
    pub pred: Point,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub mede_px: f64,
    pub n_windows: usize,
    pub traces: Vec<TracePoint>,
}

/// Average pixel MEDE over non-overlapping windows (stride = horizon).
///
/// Window anchors start at the first position with enough history.
pub fn evaluate_cell(
    forecaster: &dyn Forecaster,
    series: &FeatureSeries,
    horizon: usize,
    mode: Mode,
) -> Result<CellOutcome, EvalError> {
    let first = forecaster
        .min_history(horizon)
        .max(WindowLayout::first_anchor(1, horizon) + 1)
        - 1;
    evaluate_windows(forecaster, series, horizon, mode, first)
}

/// Like [`evaluate_cell`] with an explicit first anchor, so several
/// forecasters can be scored on identical windows.
pub fn evaluate_windows(
    forecaster: &dyn Forecaster,
    series: &FeatureSeries,
    horizon: usize,
    mode: Mode,
    first: usize,
) -> Result<CellOutcome, EvalError> {
    if horizon == 0 {
        return Err(EvalError::EmptySequence);
    }
    if first + horizon >= series.len() {
        return Err(EvalError::SeriesTooShort {
            needed: first + horizon + 1,
            available: series.len(),
        });
    }
    let player = forecaster.player();
    let mut sum = 0.0;
    let mut n = 0;
    let mut traces = Vec::new();
    for anchor in (first..series.len() - horizon).step_by(horizon) {
        let pred = forecaster.forecast(series, anchor, horizon, mode)?;
        if pred.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        let truth_px: Vec<Point> = (anchor..=anchor + horizon)
            .map(|p| series.denormalize(series.centroid(player, p)))
            .collect();
        let pred_px: Vec<Point> = pred.iter().map(|&p| series.denormalize(p)).collect();
        sum += mede(&truth_px, &pred_px)?;
        for (step, (t, p)) in truth_px.iter().zip(&pred_px).enumerate() {
            traces.push(TracePoint {
                window: n,
                frame: series.frame_indices[anchor + step],
                step,
                truth: *t,
                pred: *p,
            });
        }
        n += 1;
    }
    Ok(CellOutcome {
        mede_px: sum / n as f64,
        n_windows: n,
        traces,
    })
}

/// Families, encoder lengths and horizons to evaluate.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub families: Vec<Family>,
    pub train_ms: Vec<u32>,
    pub horizons_ms: Vec<u32>,
}

impl GridSpec {
    /// All four families on the reference axes.
    pub fn table() -> Self {
        GridSpec {
            families: Family::ALL.to_vec(),
            train_ms: TABLE_TRAIN_MS.to_vec(),
            horizons_ms: TABLE_HORIZONS_MS.to_vec(),
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: Vec<String>| v.join(",");
        write!(
            f,
            "families={};train_ms={};horizons_ms={}",
            join(self.families.iter().map(|x| x.to_string()).collect()),
            join(self.train_ms.iter().map(|x| x.to_string()).collect()),
            join(self.horizons_ms.iter().map(|x| x.to_string()).collect()),
        )
    }
}

/// `table`, or `families=F1,F4;train_ms=500;horizons_ms=500,1000` with any
/// omitted axis taken from the table.
impl FromStr for GridSpec {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = GridSpec::table();
        let s = s.trim();
        if s == "table" {
            return Ok(spec);
        }
        let bad = |m: String| EvalError::Parse(format!("grid spec: {m}"));
        fn list<T: FromStr>(v: &str) -> Option<Vec<T>> {
            v.split(',').map(|x| x.trim().parse().ok()).collect()
        }
        for part in s.split(';').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=list, got `{part}`")))?;
            let err = || bad(format!("bad list `{v}` for `{}`", k.trim()));
            match k.trim() {
                "families" => spec.families = list(v).ok_or_else(err)?,
                "train_ms" => spec.train_ms = list(v).ok_or_else(err)?,
                "horizons_ms" => spec.horizons_ms = list(v).ok_or_else(err)?,
                other => return Err(bad(format!("unknown axis `{other}`"))),
            }
        }
        if spec.families.is_empty() || spec.train_ms.is_empty() || spec.horizons_ms.is_empty() {
            return Err(bad("every axis needs at least one value".into()));
        }
        if spec.horizons_ms.contains(&0) {
            return Err(bad("horizons must be positive".into()));
        }
        Ok(spec)
    }
}

/// A model tagged with its grid row.
pub struct GridModel<'a> {
    pub family: Family,
    pub train_ms: u32,
    pub forecaster: &'a dyn Forecaster,
}

/// Evaluates every (family, encoder length, horizon) cell. Rows come out in
/// family, encoder length, horizon order.
pub fn evaluate_grid(
    models: &[GridModel<'_>],
    series: &BTreeMap<Family, FeatureSeries>,
    spec: &GridSpec,
    mode: Mode,
) -> Result<Vec<(EvalResult, Vec<TracePoint>)>, EvalError> {
    let mut out = Vec::new();
    for &family in &spec.families {
        let s = series.get(&family).ok_or(EvalError::MissingSeries(family))?;
        for &train_ms in &spec.train_ms {
            let m = models
                .iter()
                .find(|m| m.family == family && m.train_ms == train_ms)
                .ok_or(EvalError::MissingCheckpoint { family, train_ms })?;
            for &horizon_ms in &spec.horizons_ms {
                let h = ms_to_frames(horizon_ms as f64, s.fps);
                let cell = evaluate_cell(m.forecaster, s, h, mode)?;
                out.push((
                    EvalResult {
                        family,
                        train_ms,
                        horizon_ms,
                        mede_px: cell.mede_px,
                        n_windows: cell.n_windows,
                        mode,
                    },
                    cell.traces,
                ));
            }
        }
    }
    Ok(out)
}
