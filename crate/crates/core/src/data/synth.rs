//! Synthetic rallies with ball-driven player motion.
//!
//! The ball alternates between the near (player 1) and far (player 2) side
//! along arcs that are linear in `x` and quadratic in `y` over time. While
//! the ball travels toward a player, that player chases the ball's arrival
//! point; the other drifts back toward the middle of the baseline. Body
//! joints are fixed anthropometric offsets scaled by apparent size, swung
//! by a gait oscillator and jittered.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, FrameRecord, FrameSize, Point, NUM_JOINTS};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub n_frames: usize,
    pub fps: f64,
    pub seed: u64,
    /// Fraction of the remaining distance to its target a player covers per
    /// frame, before the speed cap.
    pub pursuit_gain: f64,
    pub joint_jitter_px: f64,
    pub ball_speed_px_per_frame: f64,
    /// Probability per exchange that the ball is hidden mid-flight.
    pub occlusion_gap_prob: f64,
    pub frame_size: FrameSize,
    /// Observation noise added to each reported centroid.
    pub centroid_noise_px: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_frames: 3600,
            fps: 60.0,
            seed: 0,
            pursuit_gain: 0.06,
            joint_jitter_px: 1.5,
            ball_speed_px_per_frame: 14.0,
            occlusion_gap_prob: 0.1,
            frame_size: FrameSize::default(),
            centroid_noise_px: 0.5,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidParams(m.to_string()));
        if self.n_frames == 0 {
            return bad("n_frames must be positive");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if !(0.0..=1.0).contains(&self.pursuit_gain) {
            return bad("pursuit_gain must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.occlusion_gap_prob) {
            return bad("occlusion_gap_prob must lie in [0, 1]");
        }
        if !(self.ball_speed_px_per_frame > 0.0) {
            return bad("ball speed must be positive");
        }
        if !(self.joint_jitter_px >= 0.0) || !(self.centroid_noise_px >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(self.frame_size.width > 0.0 && self.frame_size.height > 0.0) {
            return bad("frame size must be positive");
        }
        Ok(())
    }
}

/// Joint offsets in body heights, COCO order, relative to the centroid.
const BODY: [Point; NUM_JOINTS] = [
    [0.0, -0.42],
    [-0.025, -0.44],
    [0.025, -0.44],
    [-0.06, -0.43],
    [0.06, -0.43],
    [-0.12, -0.30],
    [0.12, -0.30],
    [-0.17, -0.14],
    [0.17, -0.14],
    [-0.19, 0.0],
    [0.19, 0.0],
    [-0.08, 0.02],
    [0.08, 0.02],
    [-0.09, 0.24],
    [0.09, 0.24],
    [-0.10, 0.45],
    [0.10, 0.45],
];

/// Body height in pixels at the near baseline of a 720-px-high frame.
const NEAR_BODY_PX: f64 = 170.0;
/// Speed cap for players, in frame heights per frame.
const MAX_STEP: f64 = 0.0125;

struct Court {
    near_y: f64,
    far_y: f64,
    left: f64,
    right: f64,
}

impl Court {
    fn new(size: FrameSize) -> Self {
        Court {
            near_y: 0.80 * size.height,
            far_y: 0.24 * size.height,
            left: 0.30 * size.width,
            right: 0.70 * size.width,
        }
    }

    /// Apparent scale at image row `y`: 1 at the near baseline.
    fn scale(&self, y: f64) -> f64 {
        let s = (y - self.far_y) / (self.near_y - self.far_y);
        0.55 + 0.45 * s.clamp(0.0, 1.2)
    }
}

struct Flight {
    start: Point,
    end: Point,
    frames: usize,
    arc: f64,
    receiver: usize,
    hidden: Option<(usize, usize)>,
}

impl Flight {
    fn position(&self, k: usize) -> Point {
        let s = k as f64 / self.frames as f64;
        [
            self.start[0] + (self.end[0] - self.start[0]) * s,
            self.start[1] + (self.end[1] - self.start[1]) * s - self.arc * 4.0 * s * (1.0 - s),
        ]
    }
}

pub fn synth_rally(params: &SynthParams) -> Result<Vec<FrameRecord>, DataError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let size = params.frame_size;
    let court = Court::new(size);
    let home = [
        [0.5 * size.width, court.near_y],
        [0.5 * size.width, court.far_y],
    ];
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let max_step = MAX_STEP * size.height;

    let mut pos = home;
    let mut gait = [0.0f64; 2];
    let mut hitter = 0usize;
    let mut flight = new_flight(&mut rng, params, &court, pos[hitter], hitter, params.n_frames);
    let mut k = 0usize;
    let mut out = Vec::with_capacity(params.n_frames);

    for frame in 0..params.n_frames {
        if k == flight.frames {
            hitter = flight.receiver;
            flight = new_flight(&mut rng, params, &court, flight.end, hitter, params.n_frames - frame);
            k = 0;
        }
        let ball = flight.position(k);
        let hidden = flight.hidden.is_some_and(|(a, b)| (a..b).contains(&k));

        for p in 0..2 {
            let target = if p == flight.receiver {
                // stand so the racket side meets the ball
                [flight.end[0], home[p][1] + (flight.end[1] - home[p][1]) * 0.3]
            } else {
                home[p]
            };
            let gain = if p == flight.receiver {
                params.pursuit_gain
            } else {
                0.5 * params.pursuit_gain
            };
            let mut step = [gain * (target[0] - pos[p][0]), gain * (target[1] - pos[p][1])];
            let norm = step[0].hypot(step[1]);
            if norm > max_step {
                step = [step[0] * max_step / norm, step[1] * max_step / norm];
            }
            pos[p] = [pos[p][0] + step[0], pos[p][1] + step[1]];
            gait[p] += 0.05 + 0.25 * norm / max_step;
        }

        let mut bodies = [([0.0; 2], [[0.0; 2]; NUM_JOINTS]); 2];
        for p in 0..2 {
            let c = [
                pos[p][0] + params.centroid_noise_px * unit.sample(&mut rng),
                pos[p][1] + params.centroid_noise_px * unit.sample(&mut rng),
            ];
            let h = NEAR_BODY_PX * size.height / 720.0 * court.scale(pos[p][1]);
            let swing = gait[p].sin();
            let mut joints = [[0.0; 2]; NUM_JOINTS];
            for (j, off) in BODY.iter().enumerate() {
                let side = if j % 2 == 1 { 1.0 } else { -1.0 };
                let (dx, dy) = match j {
                    7..=10 => (0.0, -side * 0.03 * swing),
                    13..=16 => (side * 0.04 * swing, 0.0),
                    _ => (0.0, 0.0),
                };
                joints[j] = [
                    c[0] + (off[0] + dx) * h + params.joint_jitter_px * unit.sample(&mut rng),
                    c[1] + (off[1] + dy) * h + params.joint_jitter_px * unit.sample(&mut rng),
                ];
            }
            bodies[p] = (c, joints);
        }

        out.push(FrameRecord {
            frame_index: frame as u64,
            timestamp_ms: frame as f64 * 1000.0 / params.fps,
            p1_centroid: bodies[0].0,
            p1_joints: bodies[0].1,
            p2_centroid: bodies[1].0,
            p2_joints: bodies[1].1,
            ball: (!hidden).then_some(ball),
            ball_visible: !hidden,
            ball_interpolated: false,
        });
        k += 1;
    }
    Ok(out)
}

fn new_flight(
    rng: &mut ChaCha8Rng,
    params: &SynthParams,
    court: &Court,
    start: Point,
    hitter: usize,
    remaining: usize,
) -> Flight {
    let receiver = 1 - hitter;
    let base_y = if receiver == 0 { court.near_y } else { court.far_y };
    let depth = 0.06 * params.frame_size.height;
    let end = [
        rng.gen_range(court.left..court.right),
        base_y + rng.gen_range(-depth..depth),
    ];
    let dist = (end[0] - start[0]).hypot(end[1] - start[1]);
    let frames = ((dist / params.ball_speed_px_per_frame).ceil() as usize).max(8);
    let arc = rng.gen_range(0.05..0.16) * params.frame_size.height;
    // only hide the ball where both flanks of the gap will be recorded
    let occlude = rng.gen::<f64>() < params.occlusion_gap_prob;
    let hidden = (occlude && frames >= 30 && frames <= remaining).then(|| {
        let len = frames / 3;
        (len, 2 * len)
    });
    Flight {
        start,
        end,
        frames,
        arc,
        receiver,
        hidden,
    }
}
