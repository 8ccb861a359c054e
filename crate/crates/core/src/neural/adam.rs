use alloc::vec::Vec;

use super::layers::LayerParams;
use super::model::{Gradients, NeuralModel};
use crate::defaults;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: defaults::ADAM_LR,
            beta1: defaults::ADAM_BETA1,
            beta2: defaults::ADAM_BETA2,
            epsilon: defaults::ADAM_EPS,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be finite and >= 0"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::param(alloc::format!("{name} must be in [0, 1)")));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::param("adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// First and second moment estimates, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamState {
    pub first: Vec<LayerParams>,
    pub second: Vec<LayerParams>,
    pub timestep: u64,
}

impl AdamState {
    pub(crate) fn for_params(params: &[&LayerParams]) -> Self {
        let zeros: Vec<LayerParams> = params.iter().map(|p| LayerParams::zeros_like(p)).collect();
        AdamState {
            first: zeros.clone(),
            second: zeros,
            timestep: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter of `model`.
pub fn adam_step(model: &mut NeuralModel, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    if grads.layers.len() != model.layers.len() {
        return Err(Error::DimensionMismatch {
            expected: model.layers.len(),
            actual: grads.layers.len(),
        });
    }
    for (layer, g) in model.layers.iter().zip(&grads.layers) {
        if !layer.params.same_shape(g) {
            return Err(Error::DimensionMismatch {
                expected: layer.params.len(),
                actual: g.len(),
            });
        }
    }
    let state = &mut model.adam;
    state.timestep += 1;
    let t = state.timestep as f64;
    let correct1 = 1.0 - libm::pow(cfg.beta1, t);
    let correct2 = 1.0 - libm::pow(cfg.beta2, t);
    for (k, layer) in model.layers.iter_mut().enumerate() {
        let g = &grads.layers[k];
        let m = &mut state.first[k];
        let v = &mut state.second[k];
        update(
            &mut layer.params.weights,
            &g.weights,
            &mut m.weights,
            &mut v.weights,
            cfg,
            correct1,
            correct2,
        );
        update(
            &mut layer.params.bias,
            &g.bias,
            &mut m.bias,
            &mut v.bias,
            cfg,
            correct1,
            correct2,
        );
    }
    Ok(())
}

fn update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &AdamConfig,
    correct1: f64,
    correct2: f64,
) {
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / correct1;
        let v_hat = v[i] / correct2;
        theta[i] -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
    }
}
