use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataError, FrameRecord, FrameSize, Player, Point, NUM_JOINTS};

/// Feature configuration of a model.
///
/// | family | features | width |
/// |---|---|---|
/// | F1 | both centroids | 4 |
/// | F2 | centroids + joints | 72 |
/// | F3 | as F2, decoder sequence mask on | 72 |
/// | F4 | as F3 plus the ball | 74 |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    F1,
    F2,
    F3,
    F4,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::F1, Family::F2, Family::F3, Family::F4];

    pub fn has_joints(self) -> bool {
        !matches!(self, Family::F1)
    }

    pub fn has_ball(self) -> bool {
        matches!(self, Family::F4)
    }

    pub fn uses_decoder_mask(self) -> bool {
        matches!(self, Family::F3 | Family::F4)
    }

    pub fn feature_dim(self) -> usize {
        let per_player = 2 + if self.has_joints() { 2 * NUM_JOINTS } else { 0 };
        2 * per_player + if self.has_ball() { 2 } else { 0 }
    }

    /// Column of the given player's centroid x; y follows it.
    pub fn centroid_column(self, player: Player) -> usize {
        match player {
            Player::One => 0,
            Player::Two => self.feature_dim() / 2 - if self.has_ball() { 1 } else { 0 },
        }
    }

    /// Column of the ball's x coordinate, if the family carries it.
    pub fn ball_column(self) -> Option<usize> {
        self.has_ball().then(|| self.feature_dim() - 2)
    }

    /// Column names in layout order.
    pub fn column_names(self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.feature_dim());
        for p in ["C1", "C2"] {
            names.push(format!("{p}.x"));
            names.push(format!("{p}.y"));
            if self.has_joints() {
                let j = if p == "C1" { "J1" } else { "J2" };
                for k in 0..NUM_JOINTS {
                    names.push(format!("{j}[{k}].x"));
                    names.push(format!("{j}[{k}].y"));
                }
            }
        }
        if self.has_ball() {
            names.push("B.x".into());
            names.push("B.y".into());
        }
        names
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Family::F1 => 1,
            Family::F2 => 2,
            Family::F3 => 3,
            Family::F4 => 4,
        };
        write!(f, "F{n}")
    }
}

impl FromStr for Family {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_start_matches(['F', 'f']) {
            "1" => Ok(Family::F1),
            "2" => Ok(Family::F2),
            "3" => Ok(Family::F3),
            "4" => Ok(Family::F4),
            _ => Err(DataError::InvalidParams(format!("unknown model family `{s}`"))),
        }
    }
}

/// Horizon or window length in milliseconds to a frame count: `round(ms·fps/1000)`,
/// at least 1.
pub fn ms_to_frames(ms: f64, fps: f64) -> usize {
    ((ms * fps / 1000.0).round() as usize).max(1)
}

/// Normalized per-frame feature matrix for one model family.
///
/// Pixel coordinates are divided by the frame width (x) and height (y).
/// Values are clamped to `[0, 1]`; positions outside the frame (a lobbed ball,
/// for instance) sit on the border.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSeries {
    pub family: Family,
    pub fps: f64,
    pub frame_size: FrameSize,
    pub frame_indices: Vec<u64>,
    data: Vec<f64>,
}

impl FeatureSeries {
    pub fn from_matrix(
        family: Family,
        fps: f64,
        frame_size: FrameSize,
        frame_indices: Vec<u64>,
        data: Vec<f64>,
    ) -> Result<Self, DataError> {
        if data.len() != frame_indices.len() * family.feature_dim() {
            return Err(DataError::InvalidParams(format!(
                "{} values do not form {} rows of width {}",
                data.len(),
                frame_indices.len(),
                family.feature_dim()
            )));
        }
        Ok(FeatureSeries {
            family,
            fps,
            frame_size,
            frame_indices,
            data,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.family.feature_dim()
    }

    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.feature_dim();
        &self.data[t * d..(t + 1) * d]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.data
    }

    pub fn centroid(&self, player: Player, t: usize) -> Point {
        let c = self.family.centroid_column(player);
        let r = self.row(t);
        [r[c], r[c + 1]]
    }

    /// Consecutive rows `[start, end)` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> FeatureSeries {
        let d = self.feature_dim();
        FeatureSeries {
            family: self.family,
            fps: self.fps,
            frame_size: self.frame_size,
            frame_indices: self.frame_indices[start..end].to_vec(),
            data: self.data[start * d..end * d].to_vec(),
        }
    }

    pub fn normalize(&self, p: Point) -> Point {
        normalize(self.frame_size, p)
    }

    pub fn denormalize(&self, p: Point) -> Point {
        denormalize(self.frame_size, p)
    }
}

pub fn normalize(size: FrameSize, p: Point) -> Point {
    [p[0] / size.width, p[1] / size.height]
}

pub fn denormalize(size: FrameSize, p: Point) -> Point {
    [p[0] * size.width, p[1] * size.height]
}

/// Builds the normalized feature matrix with layout
/// `[C1, J1, C2, J2, B]`, dropping the blocks a family does not use.
pub fn build_feature_series(
    records: &[FrameRecord],
    family: Family,
    frame_size: FrameSize,
    fps: f64,
) -> Result<FeatureSeries, DataError> {
    let d = family.feature_dim();
    let mut data = Vec::with_capacity(records.len() * d);
    let push = |data: &mut Vec<f64>, p: Point| {
        let [x, y] = normalize(frame_size, p);
        data.push(x.clamp(0.0, 1.0));
        data.push(y.clamp(0.0, 1.0));
    };
    for r in records {
        for player in [Player::One, Player::Two] {
            let c = r.centroid(player);
            let joints = r.joints(player);
            let finite = |p: &Point| p[0].is_finite() && p[1].is_finite();
            if !finite(&c) || (family.has_joints() && !joints.iter().all(finite)) {
                return Err(DataError::MissingJoint {
                    frame_index: r.frame_index,
                    player: player.number(),
                });
            }
            push(&mut data, c);
            if family.has_joints() {
                for j in joints {
                    push(&mut data, *j);
                }
            }
        }
        if family.has_ball() {
            match r.ball {
                Some(b) if r.ball_visible && b[0].is_finite() && b[1].is_finite() => {
                    push(&mut data, b)
                }
                _ => {
                    return Err(DataError::MissingBall {
                        frame_index: r.frame_index,
                    })
                }
            }
        }
    }
    Ok(FeatureSeries {
        family,
        fps,
        frame_size,
        frame_indices: records.iter().map(|r| r.frame_index).collect(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(i: u64) -> FrameRecord {
        let mut j1 = [[0.0; 2]; NUM_JOINTS];
        let mut j2 = [[0.0; 2]; NUM_JOINTS];
        for k in 0..NUM_JOINTS {
            j1[k] = [200.0 + k as f64, 500.0 + k as f64];
            j2[k] = [700.0 - k as f64, 100.0 + k as f64];
        }
        FrameRecord {
            frame_index: i,
            timestamp_ms: 0.0,
            p1_centroid: [210.0, 520.0],
            p1_joints: j1,
            p2_centroid: [690.0, 110.0],
            p2_joints: j2,
            ball: Some([640.0, 360.0]),
            ball_visible: true,
            ball_interpolated: false,
        }
    }

    #[test]
    fn family_widths() {
        assert_eq!(Family::F1.feature_dim(), 4);
        assert_eq!(Family::F2.feature_dim(), 2 * (2 + 34));
        assert_eq!(Family::F3.feature_dim(), 72);
        assert_eq!(Family::F4.feature_dim(), 74);
        for f in Family::ALL {
            assert_eq!(f.column_names().len(), f.feature_dim());
        }
    }

    #[test]
    fn layout_is_fixed() {
        let names = Family::F4.column_names();
        assert_eq!(&names[72..], &["B.x", "B.y"]);
        assert_eq!(names[36], "C2.x");
        assert_eq!(Family::F4.centroid_column(Player::Two), 36);
        assert_eq!(Family::F2.centroid_column(Player::Two), 36);
        assert_eq!(Family::F1.centroid_column(Player::Two), 2);
        assert_eq!(Family::F4.ball_column(), Some(72));
        assert_eq!(Family::F1.ball_column(), None);

        let s = build_feature_series(&[record(0)], Family::F4, FrameSize::default(), 60.0).unwrap();
        assert_eq!(&s.row(0)[72..], &[0.5, 0.5]);
        assert_eq!(s.centroid(Player::Two, 0), [690.0 / 1280.0, 110.0 / 720.0]);
    }

    #[test]
    fn frames_from_milliseconds() {
        assert_eq!(ms_to_frames(500.0, 60.0), 30);
        assert_eq!(ms_to_frames(50.0, 60.0), 3);
        assert_eq!(ms_to_frames(1000.0, 60.0), 60);
        assert_eq!(ms_to_frames(750.0, 60.0), 45);
        assert_eq!(ms_to_frames(1.0, 60.0), 1);
        assert_eq!(ms_to_frames(0.0, 60.0), 1);
    }

    #[test]
    fn ball_required_for_f4() {
        let mut r = record(3);
        r.ball = None;
        r.ball_visible = false;
        assert!(matches!(
            build_feature_series(&[r.clone()], Family::F4, FrameSize::default(), 60.0),
            Err(DataError::MissingBall { frame_index: 3 })
        ));
        assert!(build_feature_series(&[r], Family::F3, FrameSize::default(), 60.0).is_ok());
    }

    #[test]
    fn non_finite_joint_is_missing() {
        let mut r = record(7);
        r.p2_joints[4] = [f64::NAN, 1.0];
        assert!(matches!(
            build_feature_series(&[r.clone()], Family::F2, FrameSize::default(), 60.0),
            Err(DataError::MissingJoint { frame_index: 7, player: 2 })
        ));
        // F1 ignores joints
        assert!(build_feature_series(&[r], Family::F1, FrameSize::default(), 60.0).is_ok());
    }

    #[test]
    fn family_parsing() {
        assert_eq!("F3".parse::<Family>().unwrap(), Family::F3);
        assert_eq!("4".parse::<Family>().unwrap(), Family::F4);
        assert!("F5".parse::<Family>().is_err());
        assert_eq!(Family::F2.to_string(), "F2");
    }

    proptest! {
        #[test]
        fn normalization_round_trip(x in 0.0f64..1920.0, y in 0.0f64..1080.0, w in 320.0f64..4000.0, h in 240.0f64..3000.0) {
            let size = FrameSize { width: w, height: h };
            let back = denormalize(size, normalize(size, [x, y]));
            prop_assert!((back[0] - x).abs() <= 1e-12 * x.max(1.0));
            prop_assert!((back[1] - y).abs() <= 1e-12 * y.max(1.0));
        }

        #[test]
        fn in_frame_values_lie_in_unit_interval(x in 0.0f64..1280.0, y in 0.0f64..720.0) {
            let mut r = record(0);
            r.p1_centroid = [x, y];
            r.ball = Some([x, -40.0]);
            let s = build_feature_series(&[r], Family::F4, FrameSize::default(), 60.0).unwrap();
            prop_assert!(s.matrix().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
