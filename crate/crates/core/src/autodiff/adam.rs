//! Bias-corrected Adam.

use super::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f32>,
    pub second_moment: Vec<f32>,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamState {
    pub fn new(param_len: usize) -> Self {
        AdamState {
            step: 0,
            first_moment: vec![0.0; param_len],
            second_moment: vec![0.0; param_len],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update of a parameter tensor in place.
pub fn adam_step(param: &mut Tensor, grad: &[f32], state: &mut AdamState, lr: f32) {
    assert_eq!(param.len(), grad.len(), "adam_step gradient length mismatch");
    assert_eq!(state.first_moment.len(), grad.len(), "adam state length mismatch");
    state.step += 1;
    let t = state.step as f64;
    let b1 = state.beta1 as f64;
    let b2 = state.beta2 as f64;
    let bc1 = 1.0 - b1.powf(t);
    let bc2 = 1.0 - b2.powf(t);
    let data = param.data_mut();
    for i in 0..grad.len() {
        let g = grad[i] as f64;
        let m = b1 * state.first_moment[i] as f64 + (1.0 - b1) * g;
        let v = b2 * state.second_moment[i] as f64 + (1.0 - b2) * g * g;
        state.first_moment[i] = m as f32;
        state.second_moment[i] = v as f32;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        data[i] -= (lr as f64 * m_hat / (v_hat.sqrt() + state.eps as f64)) as f32;
    }
}

/// Adam over an ordered list of parameter tensors.
pub struct AdamOpt {
    pub lr: f32,
    states: Vec<AdamState>,
}

impl AdamOpt {
    pub fn new(params: &[&Tensor], lr: f32) -> Self {
        AdamOpt { lr, states: params.iter().map(|p| AdamState::new(p.len())).collect() }
    }

    /// Reset all moments and step counts (fresh inner loop).
    pub fn reset(&mut self) {
        for s in self.states.iter_mut() {
            *s = AdamState::new(s.first_moment.len());
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f32>]) {
        assert_eq!(params.len(), self.states.len(), "optimizer/param list mismatch");
        assert_eq!(grads.len(), self.states.len(), "optimizer/grad list mismatch");
        for ((p, s), g) in params.iter_mut().zip(self.states.iter_mut()).zip(grads) {
            adam_step(p, g, s, self.lr);
        }
    }
}
