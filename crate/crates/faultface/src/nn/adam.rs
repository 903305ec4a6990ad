//! Adam with bias correction, pure-functional: each step returns fresh
//! parameters and state.

use crate::error::{Error, Result};
use crate::nn::{GradSet, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    /// beta1 = 0.5: the stability convention for adversarial training.
    pub fn adversarial(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn classifier(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moments per trainable tensor plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub hyper: AdamParams,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, hyper: AdamParams) -> AdamState {
        let m = params.trainable().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let v = params.trainable().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState { hyper, t: 0, m, v }
    }

    /// Scale the learning rate (used by decay schedules); everything
    /// else, including the moments, carries over.
    pub fn with_lr(&self, lr: f64) -> AdamState {
        let mut out = self.clone();
        out.hyper.lr = lr;
        out
    }
}

/// One bias-corrected Adam update. Inputs are untouched; the returned
/// state has `t` incremented.
pub fn adam_step(
    params: &ParamSet,
    grads: &GradSet,
    state: &AdamState,
) -> Result<(ParamSet, AdamState)> {
    let tensors = params.trainable();
    let gtensors = grads.trainable();
    if tensors.len() != gtensors.len() || tensors.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} param tensors vs {} grads vs {} moments",
            tensors.len(),
            gtensors.len(),
            state.m.len()
        )));
    }
    for (p, g) in tensors.iter().zip(gtensors.iter()) {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "adam: param shape {:?} vs grad shape {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }

    let mut new_params = params.clone();
    let mut new_state = state.clone();
    new_state.t = state.t + 1;
    let t = new_state.t as i32;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);

    let updated = new_params.trainable_mut();
    for (slot, (p, g)) in updated.into_iter().zip(gtensors.iter()).enumerate() {
        let m = new_state.m[slot].data_mut();
        let v = new_state.v[slot].data_mut();
        let gd = g.data();
        let pd = p.data_mut();
        for i in 0..pd.len() {
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gd[i];
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gd[i] * gd[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            pd[i] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
        }
    }
    Ok((new_params, new_state))
}
