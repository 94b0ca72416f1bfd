//! Adaptive-moment optimizer.

use alloc::vec::Vec;

use crate::fmath;
use crate::layers::ParamStore;

/// First/second moment buffers, one pair per parameter tensor, aligned
/// with the [`ParamStore`] order.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        AdamState {
            m: params
                .entries
                .iter()
                .map(|p| alloc::vec![0.0; p.value.numel()])
                .collect(),
            v: params
                .entries
                .iter()
                .map(|p| alloc::vec![0.0; p.value.numel()])
                .collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected update. `grads` holds one gradient buffer per
/// parameter tensor, aligned with the store.
pub fn adam_step(params: &mut ParamStore, grads: &[Vec<f64>], state: &mut AdamState, lr: f64) {
    assert_eq!(grads.len(), params.len(), "one gradient per parameter");
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - libm::pow(state.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, t as f64);
    for (i, p) in params.entries.iter_mut().enumerate() {
        let g = &grads[i];
        debug_assert_eq!(g.len(), p.value.numel());
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (j, w) in p.value.data_mut().iter_mut().enumerate() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w -= lr * m_hat / (fmath::sqrt(v_hat) + state.epsilon);
        }
    }
}
