use alloc::vec::Vec;

use super::activation::Activation;
use super::adam::AdamState;
use super::layers::{Layer, LayerParams, LayerSpec, LayerTrace};
use super::loss::{bce_gradient, bce_loss};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Layer stack ending in a sigmoid dense output, plus its Adam state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NeuralModel {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub adam: AdamState,
    pub seed: u64,
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

fn check_output_layer(specs: &[LayerSpec]) -> Result<()> {
    match specs.last() {
        Some(LayerSpec::Dense {
            activation: Activation::Sigmoid,
            ..
        }) => Ok(()),
        _ => Err(Error::param(
            "layer list must end with a sigmoid dense output layer",
        )),
    }
}

impl NeuralModel {
    /// Glorot-uniform initialization from `seed`.
    pub fn init(input_dim: usize, specs: &[LayerSpec], seed: u64) -> Result<NeuralModel> {
        check_output_layer(specs)?;
        let mut rng = rng::stream(seed, Stream::Init, 0);
        let mut layers = Vec::with_capacity(specs.len());
        let mut dim = input_dim;
        for &spec in specs {
            let layer = Layer::init(spec, dim, &mut rng)?;
            dim = layer.output_dim;
            layers.push(layer);
        }
        Ok(Self::assemble(input_dim, layers, seed))
    }

    /// Builds a model from already-shaped layers with fresh optimizer state.
    pub fn from_layers(input_dim: usize, layers: Vec<Layer>, seed: u64) -> Result<NeuralModel> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        check_output_layer(&specs)?;
        let mut dim = input_dim;
        for l in &layers {
            if l.input_dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: l.input_dim,
                });
            }
            dim = l.output_dim;
        }
        Ok(Self::assemble(input_dim, layers, seed))
    }

    fn assemble(input_dim: usize, layers: Vec<Layer>, seed: u64) -> NeuralModel {
        let params: Vec<&LayerParams> = layers.iter().map(|l| &l.params).collect();
        let adam = AdamState::for_params(&params);
        NeuralModel {
            input_dim,
            layers,
            adam,
            seed,
        }
    }

    /// Checks parameter and optimizer shapes; used after deserializing.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::from_layers(self.input_dim, self.layers.clone(), self.seed)?;
        for l in &self.layers {
            Layer::with_params(l.spec, l.input_dim, l.params.clone())?;
        }
        let fresh = rebuilt.adam;
        let ok = self.adam.first.len() == fresh.first.len()
            && self.adam.second.len() == fresh.second.len()
            && self
                .adam
                .first
                .iter()
                .chain(&self.adam.second)
                .zip(fresh.first.iter().chain(&fresh.second))
                .all(|(a, b)| a.same_shape(b));
        if !ok {
            return Err(Error::ModelMismatch(
                "optimizer moments do not match parameter shapes".into(),
            ));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.output_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.params.weights);
            out.extend_from_slice(&l.params.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.params.weights.iter_mut().chain(l.params.bias.iter_mut()) {
                *v = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_prefix(x, self.layers.len())
    }

    /// Output of the first `n_layers` layers.
    pub fn forward_prefix(&self, x: &[f64], n_layers: usize) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for l in &self.layers[..n_layers.min(self.layers.len())] {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    /// Hidden representation feeding the output layer.
    pub fn embedding(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_prefix(x, self.layers.len() - 1)
    }

    fn forward_traced(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<LayerTrace>)> {
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for l in &self.layers {
            let (out, trace) = l.forward_traced(&h)?;
            traces.push(trace);
            h = out;
        }
        Ok((h, traces))
    }

    /// Batch-mean cross-entropy loss and its exact gradient.
    pub fn loss_and_gradients<X, Y>(&self, inputs: &[X], targets: &[Y]) -> Result<(f64, Gradients)>
    where
        X: AsRef<[f64]>,
        Y: AsRef<[f64]>,
    {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                actual: targets.len(),
            });
        }
        let mut grads = Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams::zeros_like(&l.params))
                .collect(),
        };
        if inputs.is_empty() {
            return Ok((0.0, grads));
        }
        let scale = 1.0 / inputs.len() as f64;
        let mut total = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            let (out, traces) = self.forward_traced(x.as_ref())?;
            let y = y.as_ref();
            total += bce_loss(&out, y)?;
            let mut g: Vec<f64> = bce_gradient(&out, y)?
                .into_iter()
                .map(|v| v * scale)
                .collect();
            for (k, layer) in self.layers.iter().enumerate().rev() {
                g = layer.backward(&traces[k], &g, &mut grads.layers[k]);
            }
        }
        Ok((total * scale, grads))
    }

    /// Batch-mean loss only.
    pub fn loss<X, Y>(&self, inputs: &[X], targets: &[Y]) -> Result<f64>
    where
        X: AsRef<[f64]>,
        Y: AsRef<[f64]>,
    {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                actual: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            total += bce_loss(&self.forward(x.as_ref())?, y.as_ref())?;
        }
        Ok(total / inputs.len() as f64)
    }
}
