//! Deep node ranking: personalized PageRank with shrinking, a shallow neural
//! stack trained on rank vectors, and the evaluation metrics used to score
//! node classification.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, threading and
//! the command line live in the companion `dnr` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dnr;
pub mod error;
pub mod eval;
pub mod generators;
pub mod graph;
pub mod matrix;
pub mod neural;
pub mod pprs;
pub mod rng;

pub use error::{Error, Result};
pub use graph::{Graph, GraphBuilder, LabelMatrix, TransitionMatrix};
pub use matrix::Matrix;
pub use pprs::{ppr, ppr_batch, shrink_probe, PprConfig, PprVector, ResidualNorm};

/// Defaults that mirror the experimental setup the method was published with.
pub mod defaults {
    pub const DAMPING: f64 = 0.5;
    pub const EPSILON: f64 = 1e-6;
    pub const MAX_STEPS: usize = 100_000;
    pub const SPREAD_STEP: usize = 10;
    pub const SPREAD_PERCENT: f64 = 0.3;
    pub const BATCH_SIZE: usize = 5;
    pub const MAX_EPOCHS: usize = 20;
    pub const ATTENTION_EPOCHS: usize = 100;
    pub const PATIENCE: usize = 5;
    pub const EMBED_DIM: usize = 128;
    pub const PLATEAU_TOLERANCE: f64 = 1e-5;
    pub const QUEUE_CAPACITY: usize = 4;

    pub const CONV_FILTERS: usize = 2;
    pub const CONV_KERNEL: usize = 8;
    pub const CONV_POOL: usize = 2;

    pub const ADAM_LR: f64 = 1e-3;
    pub const ADAM_BETA1: f64 = 0.9;
    pub const ADAM_BETA2: f64 = 0.999;
    pub const ADAM_EPS: f64 = 1e-8;

    pub const CONSTRUCTION_FRACTION: f64 = 0.2;
    pub const REPEATS: usize = 5;
    pub const L2_LAMBDA: f64 = 1.0;
    pub const TRAIN_FRACTIONS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
}
