use std::path::PathBuf;

use clap::Args;
use pose2traj::config::render_pairs;
use pose2traj::data::{
    fill_ball_gaps, find_gaps, synth_rally, FrameSize, RecordFile, RecordFormat, SeriesMeta,
    SynthParams, DEFAULT_CONTEXT, DEFAULT_DEGREE,
};

use crate::error::CliError;
use crate::io::{read_records, write_records};
use crate::settings::{self, owned};
use crate::ConfigArgs;

pub const SYNTH_KEYS: [&str; 9] = [
    "n_frames",
    "fps",
    "seed",
    "pursuit_gain",
    "joint_jitter_px",
    "ball_speed_px_per_frame",
    "occlusion_gap_prob",
    "frame_size",
    "centroid_noise_px",
];

pub const GAPFILL_KEYS: [&str; 2] = ["context", "degree"];

pub fn parse_frame_size(s: &str) -> Result<FrameSize, String> {
    let bad = || format!("expected WIDTHxHEIGHT, got `{s}`");
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    let size = FrameSize {
        width: w.trim().parse().map_err(|_| bad())?,
        height: h.trim().parse().map_err(|_| bad())?,
    };
    if !(size.width > 0.0 && size.height > 0.0) {
        return Err(bad());
    }
    Ok(size)
}

fn bad_value(key: &str, value: &str) -> CliError {
    CliError::Input(format!("config key `{key}`: bad value `{value}`"))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| bad_value(key, value))
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Converted copy; omit to only validate.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Input format when the extension does not tell.
    #[arg(long)]
    pub input_format: Option<RecordFormat>,
    /// Output format when the extension does not tell.
    #[arg(long)]
    pub format: Option<RecordFormat>,
    /// Frame size to record when the input metadata has none.
    #[arg(long, value_parser = parse_frame_size)]
    pub frame_size: Option<FrameSize>,
    /// Frame rate to record when the input metadata has none.
    #[arg(long)]
    pub fps: Option<f64>,
}

pub fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let mut file = read_records(&a.input, a.input_format)?;
    if file.meta.frame_size.is_none() {
        file.meta.frame_size = a.frame_size;
    }
    if file.meta.fps.is_none() {
        file.meta.fps = a.fps;
    }
    let gaps = find_gaps(&file.records);
    let hidden: usize = gaps.iter().map(|g| g.end - g.start).sum();
    let size = file.meta.frame_size_or_default();
    log::info!(
        "{}: {} frames, frame_size={}x{}, fps={}, {} ball gaps covering {} frames",
        a.input.display(),
        file.records.len(),
        size.width,
        size.height,
        file.meta.fps_or_default(),
        gaps.len(),
        hidden
    );
    if let Some(out) = &a.output {
        let notes = format!("source={}\n", a.input.display());
        write_records(out, &file, a.format, &notes)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct GapfillArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Visible frames used on each side of a gap.
    #[arg(long)]
    pub context: Option<usize>,
    /// Polynomial degree per axis.
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub format: Option<RecordFormat>,
}

pub fn gapfill(a: GapfillArgs, config: &ConfigArgs) -> Result<(), CliError> {
    let mut context = DEFAULT_CONTEXT;
    let mut degree = DEFAULT_DEGREE;
    for (k, v) in owned(&settings::load(config)?, &GAPFILL_KEYS) {
        match k.as_str() {
            "context" => context = parse(&k, &v)?,
            _ => degree = parse(&k, &v)?,
        }
    }
    context = a.context.unwrap_or(context);
    degree = a.degree.unwrap_or(degree);

    let file = read_records(&a.input, None)?;
    let gaps = find_gaps(&file.records);
    let records = fill_ball_gaps(&file.records, context, degree)?;
    log::info!("filled {} ball gaps", gaps.len());
    let notes = render_pairs(
        &[
            ("source", a.input.display().to_string()),
            ("context", context.to_string()),
            ("degree", degree.to_string()),
        ],
        "",
    );
    let out = RecordFile {
        meta: file.meta,
        records,
    };
    write_records(&a.output, &out, a.format, &notes)
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub format: Option<RecordFormat>,
    #[arg(long)]
    pub n_frames: Option<usize>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pursuit_gain: Option<f64>,
    #[arg(long)]
    pub joint_jitter_px: Option<f64>,
    #[arg(long)]
    pub ball_speed_px_per_frame: Option<f64>,
    #[arg(long)]
    pub occlusion_gap_prob: Option<f64>,
    #[arg(long, value_parser = parse_frame_size)]
    pub frame_size: Option<FrameSize>,
    #[arg(long)]
    pub centroid_noise_px: Option<f64>,
}

fn synth_params(a: &SynthArgs, config: &ConfigArgs) -> Result<SynthParams, CliError> {
    let mut p = SynthParams::default();
    for (k, v) in owned(&settings::load(config)?, &SYNTH_KEYS) {
        match k.as_str() {
            "n_frames" => p.n_frames = parse(&k, &v)?,
            "fps" => p.fps = parse(&k, &v)?,
            "seed" => p.seed = parse(&k, &v)?,
            "pursuit_gain" => p.pursuit_gain = parse(&k, &v)?,
            "joint_jitter_px" => p.joint_jitter_px = parse(&k, &v)?,
            "ball_speed_px_per_frame" => p.ball_speed_px_per_frame = parse(&k, &v)?,
            "occlusion_gap_prob" => p.occlusion_gap_prob = parse(&k, &v)?,
            "frame_size" => p.frame_size = parse_frame_size(&v).map_err(|_| bad_value(&k, &v))?,
            _ => p.centroid_noise_px = parse(&k, &v)?,
        }
    }
    p.n_frames = a.n_frames.unwrap_or(p.n_frames);
    p.fps = a.fps.unwrap_or(p.fps);
    p.seed = a.seed.unwrap_or(p.seed);
    p.pursuit_gain = a.pursuit_gain.unwrap_or(p.pursuit_gain);
    p.joint_jitter_px = a.joint_jitter_px.unwrap_or(p.joint_jitter_px);
    p.ball_speed_px_per_frame = a.ball_speed_px_per_frame.unwrap_or(p.ball_speed_px_per_frame);
    p.occlusion_gap_prob = a.occlusion_gap_prob.unwrap_or(p.occlusion_gap_prob);
    p.frame_size = a.frame_size.unwrap_or(p.frame_size);
    p.centroid_noise_px = a.centroid_noise_px.unwrap_or(p.centroid_noise_px);
    Ok(p)
}

pub fn synth(a: SynthArgs, config: &ConfigArgs) -> Result<(), CliError> {
    let p = synth_params(&a, config)?;
    let records = synth_rally(&p)?;
    let notes = render_pairs(
        &[
            ("n_frames", p.n_frames.to_string()),
            ("fps", p.fps.to_string()),
            ("seed", p.seed.to_string()),
            ("pursuit_gain", p.pursuit_gain.to_string()),
            ("joint_jitter_px", p.joint_jitter_px.to_string()),
            ("ball_speed_px_per_frame", p.ball_speed_px_per_frame.to_string()),
            ("occlusion_gap_prob", p.occlusion_gap_prob.to_string()),
            ("frame_size", format!("{}x{}", p.frame_size.width, p.frame_size.height)),
            ("centroid_noise_px", p.centroid_noise_px.to_string()),
        ],
        "",
    );
    let file = RecordFile {
        meta: SeriesMeta {
            frame_size: Some(p.frame_size),
            fps: Some(p.fps),
        },
        records,
    };
    log::info!("wrote {} synthetic frames", file.records.len());
    write_records(&a.output, &file, a.format, &notes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_size_text() {
        let s = parse_frame_size("1280x720").unwrap();
        assert_eq!((s.width, s.height), (1280.0, 720.0));
        assert!(parse_frame_size("1280").is_err());
        assert!(parse_frame_size("0x720").is_err());
        assert!(parse_frame_size("ax7").is_err());
    }
}
