use alloc::vec;
use alloc::vec::Vec;

use super::{NumericsError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Vec<f64>> = params.into_iter().map(|p| vec![0.0; p.numel()]).collect();
        let second = first.clone();
        AdamState { first, second, step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
///
/// A learning rate of exactly zero leaves every parameter bit-identical;
/// only the moments and the step counter advance.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[&[f64]],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<(), NumericsError> {
    if !(config.lr >= 0.0) || !config.lr.is_finite() {
        return Err(NumericsError::InvalidLearningRate(config.lr));
    }
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(NumericsError::ParameterCount {
            params: params.len(),
            grads: grads.len(),
            state: state.first.len(),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != g.len() || state.first[i].len() != g.len() {
            return Err(NumericsError::GradientShape {
                index: i,
                expected: p.numel(),
                found: g.len(),
            });
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(config.beta1, t);
    let bc2 = 1.0 - libm::pow(config.beta2, t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            if config.lr != 0.0 {
                *w -= config.lr * m_hat / (libm::sqrt(v_hat) + config.eps);
            }
        }
    }
    Ok(())
}
