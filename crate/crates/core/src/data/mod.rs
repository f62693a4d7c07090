//! Frame records, ball-gap repair, feature series, training windows and
//! synthetic rallies.

mod features;
mod gapfill;
mod record;
mod synth;
mod windows;

pub use features::{
    build_feature_series, denormalize, ms_to_frames, normalize, Family, FeatureSeries,
};
pub use gapfill::{fill_ball_gaps, find_gaps, Gap, PolyFit, DEFAULT_CONTEXT, DEFAULT_DEGREE};
pub use record::{
    csv_header, parse_frame_records, peek_meta, write_frame_records, write_frame_records_annotated,
    FrameRecord, FrameSize,
    Player, Point, RecordFile, RecordFormat, SeriesMeta, COCO_JOINTS, NUM_JOINTS,
};
pub use synth::{synth_rally, SynthParams};
pub use windows::{example_at, make_windows, TrainingExample, WindowLayout};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("frame_index must increase: record {position} has {found} after {previous}")]
    NonMonotoneFrames {
        position: usize,
        previous: u64,
        found: u64,
    },
    #[error("ball gap of {gap_len} frames at frame {frame_index} lacks {context} visible frames on both sides")]
    InsufficientContext {
        frame_index: u64,
        gap_len: usize,
        context: usize,
    },
    #[error("polynomial fit failed: {0}")]
    SingularFit(String),
    #[error("frame {frame_index}: ball position missing (run gap filling first)")]
    MissingBall { frame_index: u64 },
    #[error("frame {frame_index}: player {player} has a missing joint or centroid")]
    MissingJoint { frame_index: u64, player: u8 },
    #[error("series too short: need {needed} frames, have {available}")]
    SeriesTooShort { needed: usize, available: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
