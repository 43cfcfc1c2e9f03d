use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Adam moments and hyperparameters for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient leaves both the
/// parameter and the state untouched.
pub fn adam_step(param: &mut Tensor, grad: &[f64], state: &mut AdamState) -> Result<()> {
    if grad.len() != param.len() || state.m.len() != param.len() {
        return Err(shape_err!("adam_step: param {}, grad {}, moments {}", param.len(), grad.len(), state.m.len()));
    }
    if state.lr.is_nan() || state.lr <= 0.0 {
        return Err(Error::Usage(format!("adam_step: learning rate must be positive, got {}", state.lr)));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("adam_step: gradient[{i}] = {}", grad[i])));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - libm::pow(state.beta1, t as f64);
    let c2 = 1.0 - libm::pow(state.beta2, t as f64);
    let (b1, b2) = (state.beta1, state.beta2);
    for (((p, g), m), v) in param.data_mut().iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.lr * m_hat / (libm::sqrt(v_hat) + state.epsilon);
    }
    Ok(())
}

/// Adam over an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub states: Vec<AdamState>,
}

impl Adam {
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        Self { states: params.iter().map(|p| AdamState::new(p.len(), lr)).collect() }
    }

    pub fn set_lr(&mut self, lr: f64) {
        for s in &mut self.states {
            s.lr = lr;
        }
    }

    pub fn step_count(&self) -> u64 {
        self.states.first().map_or(0, |s| s.step)
    }

    /// Updates every parameter, or none of them if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != params.len() {
            return Err(shape_err!(
                "adam: {} params, {} grads, {} states",
                params.len(),
                grads.len(),
                self.states.len()
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter {i} at {j} is {}", g[j])));
            }
        }
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.states) {
            adam_step(p, g, s)?;
        }
        Ok(())
    }
}
