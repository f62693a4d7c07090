use nalgebra::{DMatrix, DVector};

use super::{DataError, FrameRecord};

pub const DEFAULT_CONTEXT: usize = 10;
pub const DEFAULT_DEGREE: usize = 2;

/// A maximal run of frames without a visible ball, as record positions
/// `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gap {
    pub start: usize,
    pub end: usize,
}

pub fn find_gaps(records: &[FrameRecord]) -> Vec<Gap> {
    let mut gaps = Vec::new();
    let mut i = 0;
    while i < records.len() {
        if records[i].ball_visible {
            i += 1;
            continue;
        }
        let start = i;
        while i < records.len() && !records[i].ball_visible {
            i += 1;
        }
        gaps.push(Gap { start, end: i });
    }
    gaps
}

/// Least-squares polynomial in one variable.
///
/// The abscissa is centered and scaled before building the Vandermonde
/// matrix, which keeps the fit well conditioned over frame indices in the
/// thousands.
#[derive(Clone, Debug)]
pub struct PolyFit {
    center: f64,
    half_span: f64,
    coeffs: Vec<f64>,
}

impl PolyFit {
    pub fn fit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Self, DataError> {
        if xs.len() != ys.len() || xs.len() < degree + 1 || degree == 0 {
            return Err(DataError::SingularFit(format!(
                "{} points cannot determine a degree-{degree} polynomial",
                xs.len()
            )));
        }
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let center = 0.5 * (lo + hi);
        let half_span = (0.5 * (hi - lo)).max(1.0);
        let n = xs.len();
        let vander = DMatrix::from_fn(n, degree + 1, |r, c| {
            ((xs[r] - center) / half_span).powi(c as i32)
        });
        let svd = vander.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > smax * 1e-12) {
            return Err(DataError::SingularFit(format!(
                "design matrix is rank deficient (singular values {smin:e} .. {smax:e})"
            )));
        }
        let rhs = DVector::from_column_slice(ys);
        let sol = svd
            .solve(&rhs, 0.0)
            .map_err(|e| DataError::SingularFit(e.to_string()))?;
        Ok(PolyFit {
            center,
            half_span,
            coeffs: sol.iter().copied().collect(),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.half_span;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }
}

/// Reconstructs missing ball positions.
///
/// For each gap, the `context` visible frames immediately before and after
/// it are used to fit `x(frame)` and `y(frame)` independently with a
/// least-squares polynomial of `degree`. Frames that already had a visible
/// ball are never touched.
pub fn fill_ball_gaps(
    records: &[FrameRecord],
    context: usize,
    degree: usize,
) -> Result<Vec<FrameRecord>, DataError> {
    if degree == 0 {
        return Err(DataError::InvalidParams("polynomial degree must be >= 1".into()));
    }
    let mut out = records.to_vec();
    for gap in find_gaps(records) {
        let short = || DataError::InsufficientContext {
            frame_index: records[gap.start].frame_index,
            gap_len: gap.end - gap.start,
            context,
        };
        if gap.start < context || gap.end + context > records.len() {
            return Err(short());
        }
        let before = &records[gap.start - context..gap.start];
        let after = &records[gap.end..gap.end + context];
        if !before.iter().chain(after).all(|r| r.ball_visible) {
            return Err(short());
        }
        let flank: Vec<&FrameRecord> = before.iter().chain(after).collect();
        let ts: Vec<f64> = flank.iter().map(|r| r.frame_index as f64).collect();
        let xs: Vec<f64> = flank.iter().map(|r| r.ball.unwrap()[0]).collect();
        let ys: Vec<f64> = flank.iter().map(|r| r.ball.unwrap()[1]).collect();
        let fx = PolyFit::fit(&ts, &xs, degree)?;
        let fy = PolyFit::fit(&ts, &ys, degree)?;
        for r in &mut out[gap.start..gap.end] {
            let t = r.frame_index as f64;
            r.ball = Some([fx.eval(t), fy.eval(t)]);
            r.ball_visible = true;
            r.ball_interpolated = true;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NUM_JOINTS;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn frames(n: usize, ball: impl Fn(f64) -> [f64; 2]) -> Vec<FrameRecord> {
        (0..n)
            .map(|i| FrameRecord {
                frame_index: 1000 + i as u64,
                timestamp_ms: i as f64 * 1000.0 / 60.0,
                p1_centroid: [0.0; 2],
                p1_joints: [[0.0; 2]; NUM_JOINTS],
                p2_centroid: [0.0; 2],
                p2_joints: [[0.0; 2]; NUM_JOINTS],
                ball: Some(ball(1000.0 + i as f64)),
                ball_visible: true,
                ball_interpolated: false,
            })
            .collect()
    }

    fn hide(records: &mut [FrameRecord], range: std::ops::Range<usize>) {
        for r in &mut records[range] {
            r.ball = None;
            r.ball_visible = false;
        }
    }

    fn parabola(t: f64) -> [f64; 2] {
        let s = t - 1060.0;
        [300.0 + 4.5 * s, 0.08 * s * s - 2.0 * s + 150.0]
    }

    #[test]
    fn exact_parabola_across_hundred_frame_gap() {
        let mut recs = frames(120, parabola);
        hide(&mut recs, 10..110);
        let filled = fill_ball_gaps(&recs, 10, 2).unwrap();
        let mut worst: f64 = 0.0;
        for r in &filled[10..110] {
            let truth = parabola(r.frame_index as f64);
            let b = r.ball.unwrap();
            worst = worst.max((b[0] - truth[0]).abs()).max((b[1] - truth[1]).abs());
            assert!(r.ball_visible && r.ball_interpolated);
        }
        assert!(worst < 1e-9, "max error {worst}");
    }

    #[test]
    fn no_gaps_is_identity() {
        let recs = frames(40, parabola);
        assert_eq!(fill_ball_gaps(&recs, 10, 2).unwrap(), recs);
    }

    #[test]
    fn visible_frames_are_untouched() {
        let mut recs = frames(80, parabola);
        hide(&mut recs, 30..45);
        let filled = fill_ball_gaps(&recs, 10, 3).unwrap();
        for (a, b) in recs.iter().zip(&filled) {
            if a.ball_visible {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn gap_at_boundary_lacks_context() {
        let mut recs = frames(50, parabola);
        hide(&mut recs, 0..5);
        assert!(matches!(
            fill_ball_gaps(&recs, 10, 2),
            Err(DataError::InsufficientContext { .. })
        ));
        let mut recs = frames(50, parabola);
        hide(&mut recs, 20..45);
        assert!(matches!(
            fill_ball_gaps(&recs, 10, 2),
            Err(DataError::InsufficientContext { .. })
        ));
    }

    #[test]
    fn too_few_points_for_degree_is_singular() {
        let mut recs = frames(30, parabola);
        hide(&mut recs, 3..27);
        assert!(matches!(
            fill_ball_gaps(&recs, 3, 6),
            Err(DataError::SingularFit(_))
        ));
    }

    /// Monte-Carlo check: σ = 1 px noise on the flanks of a 30-frame gap.
    #[test]
    fn noisy_parabola_recovery_within_five_pixels() {
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut recs = frames(50, parabola);
            for r in &mut recs {
                let b = r.ball.as_mut().unwrap();
                b[0] += noise.sample(&mut rng);
                b[1] += noise.sample(&mut rng);
            }
            hide(&mut recs, 10..40);
            let filled = fill_ball_gaps(&recs, 10, 2).unwrap();
            for r in &filled[10..40] {
                let t = parabola(r.frame_index as f64);
                let b = r.ball.unwrap();
                worst = worst.max((b[0] - t[0]).hypot(b[1] - t[1]));
            }
        }
        assert!(worst < 5.0, "worst recovery error {worst} px");
    }
}
