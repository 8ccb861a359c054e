use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Predictions are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before taking logs.
pub const PROB_CLIP: f64 = 1e-7;

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

fn check(p: &[f64], y: &[f64]) -> Result<()> {
    if p.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: p.len(),
        });
    }
    Ok(())
}

/// Two-sided binary cross-entropy, averaged over the vector.
pub fn bce_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check(predictions, targets)?;
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = clip(p);
            -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Gradient of [`bce_loss`] with respect to the predictions. Zero where the
/// clip is active.
pub fn bce_gradient(predictions: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    check(predictions, targets)?;
    let m = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            if !(PROB_CLIP..=1.0 - PROB_CLIP).contains(&p) {
                0.0
            } else {
                (-(y / p) + (1.0 - y) / (1.0 - p)) / m
            }
        })
        .collect())
}
