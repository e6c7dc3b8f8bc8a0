use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam moments and constants for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut OptimizerState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    let n = state.m.len();
    if params.len() != n || grads.len() != n || state.v.len() != n {
        return Err(Error::Config(format!(
            "adam shape mismatch: state {n}, params {}, grads {}",
            params.len(),
            grads.len()
        )));
    }
    if !(state.lr > 0.0) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for k in 0..n {
        let g = grads[k];
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Step-decay schedule: halve every 50 epochs.
pub fn lr_at(epoch: usize, lr0: f64) -> f64 {
    lr0 * 0.5f64.powi((epoch / 50) as i32)
}
