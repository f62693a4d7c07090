//! Learnable time embedding.
//!
//! For a time `τ` (seconds) the embedding has `k + 1` entries:
//!
//! ```text
//! t2v(τ)[0] = ω₀·τ + φ₀
//! t2v(τ)[i] = sin(ωᵢ·τ + φᵢ),   1 ≤ i ≤ k
//! ```
//!
//! Both the encoder and decoder streams get their own embedding, concatenated
//! after the raw features.
//!
//! ```
//! use pose2traj::autodiff::Tensor;
//! use pose2traj::time2vec::Time2VecParams;
//!
//! let t2v = Time2VecParams::new(
//!     Tensor::vector(vec![1.0, 0.0]),
//!     Tensor::vector(vec![0.0, std::f64::consts::FRAC_PI_2]),
//! ).unwrap();
//! let e = t2v.embed(&[2.0]).unwrap();
//! assert_eq!(e.row(0), &[2.0, 1.0]);
//! ```

use std::f64::consts::{PI, TAU};

use rand::Rng;

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Time2VecError {
    #[error("time embedding needs at least one periodic component")]
    NoPeriodicComponent,
    #[error("omega has {omega} entries but phi has {phi}")]
    ParamMismatch { omega: usize, phi: usize },
    #[error("features have {features} rows but the embedding has {embedding}")]
    LengthMismatch { features: usize, embedding: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Frequencies `ω` and phases `φ`, each with `k + 1` entries; index 0 is the
/// linear component.
#[derive(Clone, Debug, PartialEq)]
pub struct Time2VecParams {
    pub omega: Tensor,
    pub phi: Tensor,
}

impl Time2VecParams {
    pub fn new(omega: Tensor, phi: Tensor) -> Result<Self, Time2VecError> {
        if omega.numel() != phi.numel() {
            return Err(Time2VecError::ParamMismatch {
                omega: omega.numel(),
                phi: phi.numel(),
            });
        }
        if omega.numel() < 2 {
            return Err(Time2VecError::NoPeriodicComponent);
        }
        let n = omega.numel();
        Ok(Time2VecParams {
            omega: Tensor::new(vec![1, n], omega.into_data())?,
            phi: Tensor::new(vec![1, n], phi.into_data())?,
        })
    }

    /// Random initialization for windows of `window_frames` frames at `fps`.
    ///
    /// Periodic frequencies are drawn so periods range from the whole window
    /// down to two frames; the linear slope is drawn from `[0, 2π·fps/window]`
    /// and all phases from `[0, 2π]`.
    pub fn init<R: Rng>(k: usize, fps: f64, window_frames: usize, rng: &mut R) -> Self {
        let slow = TAU * fps / window_frames.max(2) as f64;
        let fast = PI * fps;
        let mut omega = Vec::with_capacity(k + 1);
        omega.push(rng.gen_range(0.0..=slow));
        for _ in 0..k {
            omega.push(rng.gen_range(slow..=fast.max(slow)));
        }
        let phi = (0..=k).map(|_| rng.gen_range(0.0..=TAU)).collect();
        Time2VecParams::new(Tensor::vector(omega), Tensor::vector(phi)).expect("k >= 1")
    }

    /// Number of periodic components.
    pub fn k(&self) -> usize {
        self.omega.numel() - 1
    }

    pub fn dim(&self) -> usize {
        self.omega.numel()
    }

    /// Evaluates the embedding outside of any training graph.
    pub fn embed(&self, tau: &[f64]) -> Result<Tensor, Time2VecError> {
        let mut g = Graph::new();
        let omega = g.constant(self.omega.clone());
        let phi = g.constant(self.phi.clone());
        let out = time2vec_forward(&mut g, tau, omega, phi)?;
        Ok(g.value(out).clone())
    }
}

/// `T × (k+1)` embedding of the times `tau`, differentiable in `omega` and
/// `phi` (both `1 × (k+1)` nodes).
pub fn time2vec_forward(
    g: &mut Graph,
    tau: &[f64],
    omega: Var,
    phi: Var,
) -> Result<Var, Time2VecError> {
    let width = g.value(omega).numel();
    if width < 2 {
        return Err(Time2VecError::NoPeriodicComponent);
    }
    let times = g.constant(Tensor::matrix(tau.len(), 1, tau.to_vec())?);
    let scaled = g.matmul(times, omega)?;
    let z = g.add(scaled, phi)?;
    let linear = g.slice(z, 1, 0, 1)?;
    let periodic = g.slice(z, 1, 1, width)?;
    let periodic = g.sin(periodic);
    Ok(g.concat(&[linear, periodic], 1)?)
}

/// Row-wise concatenation `[features | embedding]`.
pub fn attach_time(g: &mut Graph, features: Var, embedding: Var) -> Result<Var, Time2VecError> {
    let (f, e) = (g.shape(features)[0], g.shape(embedding)[0]);
    if f != e {
        return Err(Time2VecError::LengthMismatch {
            features: f,
            embedding: e,
        });
    }
    Ok(g.concat(&[features, embedding], 1)?)
}
