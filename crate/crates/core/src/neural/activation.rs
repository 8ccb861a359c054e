use alloc::vec::Vec;

/// Hidden-layer activations. The negative-side constant of ELU and the
/// leaky slope are both 0.01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu,
    Elu,
    Sigmoid,
    None,
}

const NEGATIVE_SLOPE: f64 = 0.01;
const ELU_SCALE: f64 = 0.01;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x < 0.0 {
                    NEGATIVE_SLOPE * x
                } else {
                    x
                }
            }
            Activation::Elu => {
                if x < 0.0 {
                    ELU_SCALE * libm::expm1(x)
                } else {
                    x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::None => x,
        }
    }

    /// Derivative at `x`. ReLU's derivative at 0 is 0.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x < 0.0 {
                    NEGATIVE_SLOPE
                } else {
                    1.0
                }
            }
            Activation::Elu => {
                if x < 0.0 {
                    ELU_SCALE * libm::exp(x)
                } else {
                    1.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::None => 1.0,
        }
    }

    pub fn parse(name: &str) -> Option<Activation> {
        Some(match name {
            "relu" => Activation::Relu,
            "leaky_relu" | "lrelu" => Activation::LeakyRelu,
            "elu" => Activation::Elu,
            "sigmoid" => Activation::Sigmoid,
            "none" | "linear" => Activation::None,
            _ => return None,
        })
    }
}

/// Logistic function, evaluated on the side that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|&v| libm::exp(v - max)).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert!((Activation::LeakyRelu.apply(-2.0) + 0.02).abs() < 1e-15);
        assert!((Activation::Elu.apply(-1.0) - 0.01 * (libm::exp(-1.0) - 1.0)).abs() < 1e-15);
        assert_eq!(Activation::Elu.apply(3.0), 3.0);
        assert_eq!(Activation::None.apply(-4.5), -4.5);
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        for x in [-700.0, -50.0, 50.0, 700.0, -1e4, 1e4] {
            let s = sigmoid(x);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
        }
        assert!(sigmoid(-700.0) > 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for act in [
            Activation::Relu,
            Activation::LeakyRelu,
            Activation::Elu,
            Activation::Sigmoid,
            Activation::None,
        ] {
            for x in [-2.3, -0.4, 0.7, 1.9] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        assert_eq!(softmax(&[0.0, 0.0]), alloc::vec![0.5, 0.5]);
        let s = softmax(&[1000.0, -1000.0, 3.0]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
