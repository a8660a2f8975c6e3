use super::TrainError;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments shaped like `sizes`.
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified if a shape differs
/// or a gradient is not finite.
pub fn adam_step(
    weights: &mut [&mut Vec<f64>],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    let shapes_ok = weights.len() == grads.len()
        && weights.len() == state.m.len()
        && weights
            .iter()
            .zip(grads)
            .zip(&state.m)
            .all(|((w, g), m)| w.len() == g.len() && g.len() == m.len());
    if !shapes_ok {
        return Err(TrainError::Config("Adam: gradient shapes do not match weights".into()));
    }
    if let Some((k, _)) = grads
        .iter()
        .enumerate()
        .find(|(_, g)| g.iter().any(|x| !x.is_finite()))
    {
        return Err(TrainError::NonFinite(format!("gradient of tensor {k}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((w, g), m), v) in weights
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for j in 0..w.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            w[j] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
