//! A small feed-forward stack: dense, 1-D convolution with average pooling,
//! and a softmax attention gate, trained with binary cross-entropy and Adam.
//! Gradients are derived by hand for each layer kind.

mod activation;
mod adam;
mod layers;
mod loss;
mod model;

pub use activation::{sigmoid, softmax, Activation};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use layers::{Layer, LayerParams, LayerSpec};
pub use loss::{bce_gradient, bce_loss, PROB_CLIP};
pub use model::{Gradients, NeuralModel};
