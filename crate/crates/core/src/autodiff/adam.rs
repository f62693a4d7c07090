use super::{AutodiffError, Tensor};

/// Adam hyperparameters. Defaults: β1 = 0.9, β2 = 0.98, ε = 1e-9.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            step_count: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }
}

/// One Adam update with bias correction.
///
/// Weight decay is decoupled: `p -= lr·wd·p` happens before the moment
/// update is applied. Gradients are zeroed afterwards.
pub fn adam_step(
    params: &mut [Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), AutodiffError> {
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(AutodiffError::ShapeMismatch(format!(
            "optimizer state tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.grad().is_none() {
            return Err(AutodiffError::MissingGradient(i));
        }
        if state.m[i].len() != p.numel() || state.v[i].len() != p.numel() {
            return Err(AutodiffError::ShapeMismatch(format!(
                "optimizer state for parameter {i} does not match its shape {:?}",
                p.shape()
            )));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let grad = p.take_grad().expect("checked above");
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let data = p.data_mut();
        for j in 0..data.len() {
            let gj = grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            data[j] -= cfg.lr * cfg.weight_decay * data[j];
            data[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        p.set_grad(vec![0.0; grad.len()])?;
    }
    Ok(())
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(params: &mut [Tensor], max_norm: f64) -> f64 {
    let total: f64 = params
        .iter()
        .filter_map(|p| p.grad())
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if total > max_norm && total.is_finite() {
        let s = max_norm / total;
        for p in params.iter_mut() {
            if let Some(g) = p.take_grad() {
                let scaled = g.into_iter().map(|x| x * s).collect();
                p.set_grad(scaled).expect("same length");
            }
        }
    }
    total
}
