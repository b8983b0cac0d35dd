use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// Advances the moments and returns the bias-corrected update
/// `−lr·m̂/(√v̂ + ε)` to be added to the parameters.
pub fn adam_update(state: &AdamState, grads: &[f64]) -> Result<(AdamState, Vec<f64>)> {
    if grads.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            expected: state.m.len(),
            got: grads.len(),
        });
    }
    let c = state.config;
    let step = state.step + 1;
    let bc1 = 1.0 - c.beta1.powi(step as i32);
    let bc2 = 1.0 - c.beta2.powi(step as i32);
    let mut next = state.clone();
    next.step = step;
    let mut update = Vec::with_capacity(grads.len());
    for (i, &g) in grads.iter().enumerate() {
        let m = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        let v = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        next.m[i] = m;
        next.v[i] = v;
        update.push(-c.learning_rate * (m / bc1) / ((v / bc2).sqrt() + c.epsilon));
    }
    Ok((next, update))
}

pub fn adam_step(state: &AdamState, params: &[f64], grads: &[f64]) -> Result<(AdamState, Vec<f64>)> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            expected: params.len(),
            got: grads.len(),
        });
    }
    let (next, update) = adam_update(state, grads)?;
    Ok((next, params.iter().zip(&update).map(|(p, u)| p + u).collect()))
}
