use super::{AutodiffError, Graph, Tensor, Var};

/// Central-difference gradient of a scalar graph builder with respect to
/// every element of every input.
pub fn numeric_grad<F>(
    mut builder: F,
    inputs: &[Tensor],
    h: f64,
) -> Result<Vec<Vec<f64>>, AutodiffError>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut eval = |inputs: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let loss = builder(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut gi = vec![0.0; inputs[i].numel()];
        for (j, slot) in gi.iter_mut().enumerate() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            *slot = (plus - minus) / (2.0 * h);
        }
        out.push(gi);
    }
    Ok(out)
}

/// Largest elementwise relative disagreement between reverse-mode and
/// central-difference gradients, `|a − n| / max(1e-6, |a| + |n|)`.
///
/// The floor sits above central-difference round-off (about `1e-16·|L|/h`),
/// so entries whose true gradient is exactly zero do not register as errors.
///
/// The builder is evaluated in evaluation mode, so dropout is inert. A loss
/// that does not depend on the inputs has an analytic gradient of zero.
pub fn grad_check<F>(mut builder: F, inputs: &[Tensor], h: f64) -> Result<f64, AutodiffError>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.leaf(t.clone().requiring_grad()))
        .collect();
    let loss = builder(&mut g, &vars)?;
    let analytic: Vec<Vec<f64>> = match g.backward(loss) {
        Ok(()) => vars
            .iter()
            .zip(inputs)
            .map(|(v, t)| g.grad(*v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
            .collect(),
        Err(AutodiffError::DisconnectedGraph) => {
            inputs.iter().map(|t| vec![0.0; t.numel()]).collect()
        }
        Err(e) => return Err(e),
    };
    let numeric = numeric_grad(builder, inputs, h)?;
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().flatten().zip(numeric.iter().flatten()) {
        let err = (a - n).abs() / (a.abs() + n.abs()).max(1e-6);
        worst = worst.max(err);
    }
    Ok(worst)
}
