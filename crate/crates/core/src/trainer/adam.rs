use crate::autodiff::{ParamSet, Tensor};

use super::TrainerError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments (f64) for every parameter element.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update. `grads` must hold one tensor per parameter,
/// in parameter order and with matching shapes.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Tensor],
    state: &mut AdamState,
    config: &AdamConfig,
    lr: f64,
) -> Result<(), TrainerError> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n {
        let missing = grads.len().min(n);
        let name = if missing < n {
            params.name(params.id(missing)).to_string()
        } else {
            format!("<{} gradients for {n} parameters>", grads.len())
        };
        return Err(TrainerError::MissingGradient(name));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.tensors()[i].shape() {
            return Err(TrainerError::MissingGradient(format!(
                "{} (gradient shape {:?})",
                params.name(params.id(i)),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let AdamConfig { beta1, beta2, eps } = *config;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (p, &g)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let g = f64::from(g);
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            let update = lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            *p = (f64::from(*p) - update) as f32;
        }
    }
    Ok(())
}

/// `base` before `halving_step` (0-based iteration), `base / 2` from then on.
pub fn learning_rate(iteration: usize, base: f64, halving_step: usize) -> f64 {
    if iteration < halving_step {
        base
    } else {
        base / 2.0
    }
}
