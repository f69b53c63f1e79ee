//! Adam with bias correction and per-step learning-rate decay
//! lr_t = lr / (1 + decay * t).

use super::{CnnModel, Gradients};
use crate::error::{CadxError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            decay: 0.0002,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(CadxError::validation("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(CadxError::validation("betas must lie in [0, 1)"));
        }
        if self.decay < 0.0 || self.epsilon <= 0.0 {
            return Err(CadxError::validation("decay must be >= 0 and epsilon > 0"));
        }
        Ok(())
    }
}

/// Optimizer state: step counter plus first/second moments per parameter
/// tensor, in the same order as `CnnModel::param_tensors`.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub t: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl TrainState {
    pub fn new(model: &CnnModel) -> Self {
        TrainState {
            t: 0,
            moments: model
                .param_tensors()
                .iter()
                .map(|(_, p)| (vec![0.0; p.len()], vec![0.0; p.len()]))
                .collect(),
        }
    }
}

/// One bias-corrected Adam update. Layers whose trainable-mask entry is
/// false are left untouched (parameters and moments alike).
pub fn adam_step(
    state: &mut TrainState,
    model: &mut CnnModel,
    grads: &Gradients,
    config: &AdamConfig,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(CadxError::numeric("non-finite gradient"));
    }
    let mask = model.config().trainable_mask();
    state.t += 1;
    let t = state.t;
    let lr_t = config.learning_rate / (1.0 + config.decay * t as f64);
    let bc1 = 1.0 - config.beta1.powi(t as i32);
    let bc2 = 1.0 - config.beta2.powi(t as i32);
    let grad_tensors = grads.tensors();
    for (tensor_idx, (layer, params)) in model.param_tensors_mut().into_iter().enumerate() {
        if !mask[layer] {
            continue;
        }
        let (_, g) = grad_tensors[tensor_idx];
        let (m, v) = &mut state.moments[tensor_idx];
        for k in 0..params.len() {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            params[k] -= lr_t * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}
