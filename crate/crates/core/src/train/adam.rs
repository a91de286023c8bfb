use serde::{Deserialize, Serialize};

use crate::model::{GradSet, ModelConfig, Param, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators, laid out like the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: GradSet,
    pub v: GradSet,
    pub t: u64,
}

impl AdamState {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            m: GradSet::zeros(cfg),
            v: GradSet::zeros(cfg),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `weights` in place.
pub fn adam_step<T: Param>(
    weights: &mut Weights<T>,
    grads: &GradSet,
    state: &mut AdamState,
    lr: f64,
    params: &AdamParams,
) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - params.beta1.powi(t);
    let c2 = 1.0 - params.beta2.powi(t);
    for (((w, g), m), v) in weights
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        for (((wi, &gi), mi), vi) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = params.beta1 * *mi + (1.0 - params.beta1) * gi;
            *vi = params.beta2 * *vi + (1.0 - params.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            let step = lr * m_hat / (v_hat.sqrt() + params.eps);
            if step != 0.0 {
                *wi = T::from_f64(wi.to_f64() - step);
            }
        }
    }
}
