use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::activation::{softmax, Activation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LayerSpec {
    Dense {
        out_dim: usize,
        activation: Activation,
    },
    /// `filters` kernels of width `kernel`, stride 1, valid padding, then
    /// average pooling with window and stride `pool`. Filter outputs are
    /// concatenated.
    Conv1d {
        filters: usize,
        kernel: usize,
        pool: usize,
        activation: Activation,
    },
    /// `x * softmax(W x + b)`, square in the input length.
    AttentionGate,
}

impl LayerSpec {
    /// Output length for an input of length `input_dim`.
    pub fn output_dim(&self, input_dim: usize) -> Result<usize> {
        match *self {
            LayerSpec::Dense { out_dim, .. } => {
                if out_dim == 0 {
                    return Err(Error::param("dense layer needs out_dim >= 1"));
                }
                Ok(out_dim)
            }
            LayerSpec::Conv1d {
                filters,
                kernel,
                pool,
                ..
            } => {
                if filters == 0 || kernel == 0 || pool == 0 {
                    return Err(Error::param("conv1d needs filters, kernel, pool >= 1"));
                }
                if kernel > input_dim {
                    return Err(Error::param(format!(
                        "conv1d kernel {kernel} longer than input {input_dim}"
                    )));
                }
                let pooled = (input_dim - kernel + 1) / pool;
                if pooled == 0 {
                    return Err(Error::param(format!(
                        "conv1d pool {pool} leaves no output for input {input_dim}"
                    )));
                }
                Ok(filters * pooled)
            }
            LayerSpec::AttentionGate => {
                if input_dim == 0 {
                    return Err(Error::param("attention gate over empty input"));
                }
                Ok(input_dim)
            }
        }
    }

    /// `(weight count, bias count, fan_in, fan_out)` for an input length.
    fn shapes(&self, input_dim: usize) -> (usize, usize, usize, usize) {
        match *self {
            LayerSpec::Dense { out_dim, .. } => (out_dim * input_dim, out_dim, input_dim, out_dim),
            LayerSpec::Conv1d {
                filters, kernel, ..
            } => (filters * kernel, filters, kernel, filters * kernel),
            LayerSpec::AttentionGate => (input_dim * input_dim, input_dim, input_dim, input_dim),
        }
    }
}

/// Weights and biases of one layer. The same shape holds gradients and Adam
/// moments.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros_like(other: &LayerParams) -> Self {
        LayerParams {
            weights: vec![0.0; other.weights.len()],
            bias: vec![0.0; other.bias.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn same_shape(&self, other: &LayerParams) -> bool {
        self.weights.len() == other.weights.len() && self.bias.len() == other.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Layer {
    pub spec: LayerSpec,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Dense: `out x in` row-major. Conv1d: `filters x kernel`. Attention:
    /// `in x in`.
    pub params: LayerParams,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace {
    input: Vec<f64>,
    /// Pre-activation (dense, conv) or softmax output (attention).
    inner: Vec<f64>,
}

impl Layer {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(spec: LayerSpec, input_dim: usize, rng: &mut R) -> Result<Layer> {
        let output_dim = spec.output_dim(input_dim)?;
        let (nw, nb, fan_in, fan_out) = spec.shapes(input_dim);
        let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let weights = (0..nw).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(Layer {
            spec,
            input_dim,
            output_dim,
            params: LayerParams {
                weights,
                bias: vec![0.0; nb],
            },
        })
    }

    /// Wraps explicit parameters, checking their shapes.
    pub fn with_params(spec: LayerSpec, input_dim: usize, params: LayerParams) -> Result<Layer> {
        let output_dim = spec.output_dim(input_dim)?;
        let (nw, nb, _, _) = spec.shapes(input_dim);
        if params.weights.len() != nw {
            return Err(Error::DimensionMismatch {
                expected: nw,
                actual: params.weights.len(),
            });
        }
        if params.bias.len() != nb {
            return Err(Error::DimensionMismatch {
                expected: nb,
                actual: params.bias.len(),
            });
        }
        Ok(Layer {
            spec,
            input_dim,
            output_dim,
            params,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_traced(x).map(|(out, _)| out)
    }

    pub(crate) fn forward_traced(&self, x: &[f64]) -> Result<(Vec<f64>, LayerTrace)> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        let w = &self.params.weights;
        let b = &self.params.bias;
        let (out, inner) = match self.spec {
            LayerSpec::Dense { activation, .. } => {
                let pre: Vec<f64> = w
                    .chunks_exact(self.input_dim)
                    .zip(b)
                    .map(|(row, &bias)| dot(row, x) + bias)
                    .collect();
                let out = pre.iter().map(|&z| activation.apply(z)).collect();
                (out, pre)
            }
            LayerSpec::Conv1d {
                filters,
                kernel,
                pool,
                activation,
            } => {
                let span = self.input_dim - kernel + 1;
                let pooled = span / pool;
                let mut pre = vec![0.0; filters * span];
                let mut out = vec![0.0; filters * pooled];
                for c in 0..filters {
                    let kern = &w[c * kernel..(c + 1) * kernel];
                    let row = &mut pre[c * span..(c + 1) * span];
                    for (t, z) in row.iter_mut().enumerate() {
                        *z = dot(kern, &x[t..t + kernel]) + b[c];
                    }
                    for s in 0..pooled {
                        let window = &row[s * pool..(s + 1) * pool];
                        let sum: f64 = window.iter().map(|&z| activation.apply(z)).sum();
                        out[c * pooled + s] = sum / pool as f64;
                    }
                }
                (out, pre)
            }
            LayerSpec::AttentionGate => {
                let logits: Vec<f64> = w
                    .chunks_exact(self.input_dim)
                    .zip(b)
                    .map(|(row, &bias)| dot(row, x) + bias)
                    .collect();
                let gate = softmax(&logits);
                let out = x.iter().zip(&gate).map(|(a, g)| a * g).collect();
                (out, gate)
            }
        };
        Ok((
            out,
            LayerTrace {
                input: x.to_vec(),
                inner,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the layer input.
    pub(crate) fn backward(
        &self,
        trace: &LayerTrace,
        grad_out: &[f64],
        grad: &mut LayerParams,
    ) -> Vec<f64> {
        let x = &trace.input;
        let w = &self.params.weights;
        let mut grad_in = vec![0.0; self.input_dim];
        match self.spec {
            LayerSpec::Dense { activation, .. } => {
                for (o, (&z, &g)) in trace.inner.iter().zip(grad_out).enumerate() {
                    let dz = g * activation.derivative(z);
                    if dz == 0.0 {
                        continue;
                    }
                    grad.bias[o] += dz;
                    let row = o * self.input_dim;
                    let gw = &mut grad.weights[row..row + self.input_dim];
                    for ((gwk, &xk), (gi, &wk)) in gw
                        .iter_mut()
                        .zip(x)
                        .zip(grad_in.iter_mut().zip(&w[row..row + self.input_dim]))
                    {
                        *gwk += dz * xk;
                        *gi += dz * wk;
                    }
                }
            }
            LayerSpec::Conv1d {
                filters,
                kernel,
                pool,
                activation,
            } => {
                let span = self.input_dim - kernel + 1;
                let pooled = span / pool;
                let inv = 1.0 / pool as f64;
                for c in 0..filters {
                    for s in 0..pooled {
                        let g = grad_out[c * pooled + s] * inv;
                        for t in s * pool..(s + 1) * pool {
                            let dz = g * activation.derivative(trace.inner[c * span + t]);
                            if dz == 0.0 {
                                continue;
                            }
                            grad.bias[c] += dz;
                            for u in 0..kernel {
                                grad.weights[c * kernel + u] += dz * x[t + u];
                                grad_in[t + u] += dz * w[c * kernel + u];
                            }
                        }
                    }
                }
            }
            LayerSpec::AttentionGate => {
                let gate = &trace.inner;
                // d out_i = g_i (s_i dx_i + x_i ds_i)
                let d_gate: Vec<f64> = grad_out.iter().zip(x).map(|(g, xi)| g * xi).collect();
                let weighted: f64 = d_gate.iter().zip(gate).map(|(d, s)| d * s).sum();
                for i in 0..self.input_dim {
                    grad_in[i] += grad_out[i] * gate[i];
                }
                for i in 0..self.input_dim {
                    let dz = gate[i] * (d_gate[i] - weighted);
                    if dz == 0.0 {
                        continue;
                    }
                    grad.bias[i] += dz;
                    let row = i * self.input_dim;
                    for k in 0..self.input_dim {
                        grad.weights[row + k] += dz * x[k];
                        grad_in[k] += dz * w[row + k];
                    }
                }
            }
        }
        grad_in
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn dense(w: Vec<f64>, b: Vec<f64>, input: usize, activation: Activation) -> Layer {
        let spec = LayerSpec::Dense {
            out_dim: b.len(),
            activation,
        };
        Layer::with_params(
            spec,
            input,
            LayerParams {
                weights: w,
                bias: b,
            },
        )
        .unwrap()
    }

    #[test]
    fn dense_examples() {
        let id = dense(
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            2,
            Activation::None,
        );
        assert_eq!(id.forward(&[3.5, -2.0]).unwrap(), vec![3.5, -2.0]);

        let bias_only = dense(vec![0.0; 4], vec![1.0, 1.0], 2, Activation::Relu);
        assert_eq!(bias_only.forward(&[-8.0, 9.0]).unwrap(), vec![1.0, 1.0]);

        let sum = dense(vec![1.0, 1.0], vec![0.0], 2, Activation::Relu);
        assert_eq!(sum.forward(&[2.0, 3.0]).unwrap(), vec![5.0]);
        assert!(matches!(
            sum.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn conv(filters: usize, kernel: usize, pool: usize, input: usize, w: Vec<f64>) -> Layer {
        let spec = LayerSpec::Conv1d {
            filters,
            kernel,
            pool,
            activation: Activation::None,
        };
        Layer::with_params(
            spec,
            input,
            LayerParams {
                weights: w,
                bias: vec![0.0; filters],
            },
        )
        .unwrap()
    }

    #[test]
    fn conv_examples() {
        // conv (1,1) over (1,2,3,4) = (3,5,7); pool 2 keeps one window: (3+5)/2
        let c = conv(1, 2, 2, 4, vec![1.0, 1.0]);
        assert_eq!(c.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![4.0]);

        let ident = conv(1, 1, 1, 3, vec![1.0]);
        assert_eq!(
            ident.forward(&[-1.0, 0.5, 2.0]).unwrap(),
            vec![-1.0, 0.5, 2.0]
        );

        let spec = LayerSpec::Conv1d {
            filters: 2,
            kernel: 8,
            pool: 2,
            activation: Activation::Relu,
        };
        assert_eq!(spec.output_dim(1000).unwrap(), 992);
        assert!(spec.output_dim(7).is_err());
    }

    #[test]
    fn attention_examples() {
        let n = 4;
        let gate = Layer::with_params(
            LayerSpec::AttentionGate,
            n,
            LayerParams {
                weights: vec![0.0; n * n],
                bias: vec![0.0; n],
            },
        )
        .unwrap();
        let x = [0.4, 0.8, -1.2, 2.0];
        let out = gate.forward(&x).unwrap();
        for (o, xi) in out.iter().zip(&x) {
            assert!((o - xi / n as f64).abs() < 1e-15);
        }
        assert_eq!(gate.forward(&[0.0; 4]).unwrap(), vec![0.0; 4]);
    }
}
