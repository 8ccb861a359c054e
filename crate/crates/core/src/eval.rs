//! Scoring node embeddings: one-vs-rest logistic regression, the top-k
//! multi-label decision rule, micro/macro F1, and split sampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::defaults;
use crate::error::{Error, Result};
use crate::graph::LabelMatrix;
use crate::matrix::Matrix;
use crate::neural::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogRegOptions {
    /// Weight of the `lambda / 2 * |w|^2` penalty added to the summed
    /// cross-entropy, so `lambda` is the inverse of scikit-learn's `C`.
    /// Biases are not penalized.
    pub lambda: f64,
    /// Stop once the gradient norm falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        LogRegOptions {
            lambda: defaults::L2_LAMBDA,
            tolerance: 1e-6,
            max_iterations: 5000,
        }
    }
}

/// One binary classifier per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    /// `n_classes x dim`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    /// Classes whose training rows were all negative (or all positive); they
    /// predict this constant prior instead of a fitted score.
    pub constant: Vec<Option<f64>>,
    pub iterations: Vec<usize>,
}

impl LogisticRegression {
    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn degenerate_classes(&self) -> Vec<usize> {
        self.constant
            .iter()
            .enumerate()
            .filter_map(|(c, k)| k.map(|_| c))
            .collect()
    }

    /// Class probabilities for each listed feature row.
    pub fn predict_proba(&self, features: &Matrix, rows: &[usize]) -> Result<Matrix> {
        if features.cols() != self.weights.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.cols(),
                actual: features.cols(),
            });
        }
        let mut out = Matrix::zeros(rows.len(), self.n_classes());
        for (r, &i) in rows.iter().enumerate() {
            let x = features.row(i);
            for c in 0..self.n_classes() {
                let p = match self.constant[c] {
                    Some(prior) => prior,
                    None => sigmoid(dot(self.weights.row(c), x) + self.bias[c]),
                };
                out.set(r, c, p);
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits one-vs-rest L2-regularized logistic regression on `rows` by full-batch
/// gradient descent on the summed cross-entropy plus `lambda / 2 * |w|^2`.
/// The descent runs on that objective divided by the number of rows, which
/// has the same minimizer.
///
/// Feature row `i` is paired with label row `i`.
pub fn train_logreg(
    features: &Matrix,
    labels: &LabelMatrix,
    rows: &[usize],
    opts: &LogRegOptions,
) -> Result<LogisticRegression> {
    if features.rows() != labels.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: labels.n_nodes(),
            actual: features.rows(),
        });
    }
    if rows.is_empty() {
        return Err(Error::param("logistic regression needs training rows"));
    }
    if opts.lambda.is_nan() || opts.lambda < 0.0 {
        return Err(Error::param("lambda must be >= 0"));
    }
    if let Some(&bad) = rows.iter().find(|&&i| i >= features.rows()) {
        return Err(Error::NodeOutOfRange {
            index: bad,
            n_nodes: features.rows(),
        });
    }
    let dim = features.cols();
    let n_classes = labels.n_classes();
    let n = rows.len() as f64;
    // Lipschitz bound of the mean logistic loss on [x, 1].
    let max_sq = rows
        .iter()
        .map(|&i| features.row(i).iter().map(|v| v * v).sum::<f64>() + 1.0)
        .fold(0.0, f64::max);
    let penalty = opts.lambda / n;
    let step = 1.0 / (0.25 * max_sq + penalty);

    let mut weights = Matrix::zeros(n_classes, dim);
    let mut bias = vec![0.0; n_classes];
    let mut constant = vec![None; n_classes];
    let mut iterations = vec![0; n_classes];
    let mut grad_w = vec![0.0; dim];
    for c in 0..n_classes {
        let positives = rows.iter().filter(|&&i| labels.has(i, c)).count();
        if positives == 0 || positives == rows.len() {
            constant[c] = Some(positives as f64 / n);
            continue;
        }
        let mut b = 0.0;
        let mut w = vec![0.0; dim];
        for it in 0..opts.max_iterations {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for &i in rows {
                let x = features.row(i);
                let y = if labels.has(i, c) { 1.0 } else { 0.0 };
                let r = sigmoid(dot(&w, x) + b) - y;
                grad_b += r;
                for (g, &xk) in grad_w.iter_mut().zip(x) {
                    *g += r * xk;
                }
            }
            grad_b /= n;
            let mut norm_sq = grad_b * grad_b;
            for (g, &wk) in grad_w.iter_mut().zip(&w) {
                *g = *g / n + penalty * wk;
                norm_sq += *g * *g;
            }
            iterations[c] = it + 1;
            if libm::sqrt(norm_sq) <= opts.tolerance {
                break;
            }
            b -= step * grad_b;
            for (wk, g) in w.iter_mut().zip(&grad_w) {
                *wk -= step * g;
            }
        }
        weights.row_mut(c).copy_from_slice(&w);
        bias[c] = b;
    }
    Ok(LogisticRegression {
        weights,
        bias,
        constant,
        iterations,
    })
}

/// For row `i`, predicts the `counts[i]` classes with the highest scores;
/// ties go to the lower class index.
pub fn predict_topk(scores: &Matrix, counts: &[usize]) -> Result<LabelMatrix> {
    if counts.len() != scores.rows() {
        return Err(Error::DimensionMismatch {
            expected: scores.rows(),
            actual: counts.len(),
        });
    }
    let n_classes = scores.cols();
    let mut out = LabelMatrix::new(scores.rows(), n_classes);
    let mut order: Vec<usize> = Vec::with_capacity(n_classes);
    for (i, &k) in counts.iter().enumerate() {
        if k > n_classes {
            return Err(Error::param(format!(
                "row {i} asks for {k} labels but there are {n_classes} classes"
            )));
        }
        let row = scores.row(i);
        order.clear();
        order.extend(0..n_classes);
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for &c in &order[..k] {
            out.set(i, c, true);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
}

/// Harmonic mean of precision and recall, evaluated as the single rounded
/// ratio `2 TP / (2 TP + FP + FN)`; 0 when there are no true positives.
fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
}

/// Micro F1 pools true/false positives and false negatives over all classes;
/// macro F1 is the unweighted mean of per-class F1, with classes that never
/// occur contributing 0.
pub fn micro_macro_f1(predicted: &LabelMatrix, truth: &LabelMatrix) -> Result<F1Scores> {
    if predicted.n_nodes() != truth.n_nodes() || predicted.n_classes() != truth.n_classes() {
        return Err(Error::DimensionMismatch {
            expected: truth.n_nodes() * truth.n_classes(),
            actual: predicted.n_nodes() * predicted.n_classes(),
        });
    }
    let n_classes = truth.n_classes();
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for i in 0..truth.n_nodes() {
        for (c, (&p, &t)) in predicted.row(i).iter().zip(truth.row(i)).enumerate() {
            match (p != 0, t != 0) {
                (true, true) => tp[c] += 1,
                (true, false) => fp[c] += 1,
                (false, true) => fn_[c] += 1,
                (false, false) => {}
            }
        }
    }
    let macro_ = if n_classes == 0 {
        0.0
    } else {
        (0..n_classes)
            .map(|c| f1_from_counts(tp[c], fp[c], fn_[c]))
            .sum::<f64>()
            / n_classes as f64
    };
    let micro = f1_from_counts(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    Ok(F1Scores { micro, macro_ })
}

/// Draws `round(fraction * len)` items as the first part and returns the rest
/// as the second, both in drawn order. Fails if either part would be empty.
pub fn split_fraction<R: Rng>(
    items: &[usize],
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param(format!("fraction {fraction} outside (0, 1)")));
    }
    let take = libm::round(fraction * items.len() as f64) as usize;
    if take == 0 || take >= items.len() {
        return Err(Error::param(format!(
            "fraction {fraction} of {} items leaves an empty split",
            items.len()
        )));
    }
    let mut shuffled = items.to_vec();
    shuffled.shuffle(rng);
    let rest = shuffled.split_off(take);
    Ok((shuffled, rest))
}
