//! Personalized PageRank with shrinking.
//!
//! A cheap reachability probe first decides whether the seed's reachable set
//! is small. If it is, the power iteration runs on the induced submatrix and
//! the result is scattered back, leaving exact zeros on unreachable nodes.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::defaults;
use crate::error::{Error, Result};
use crate::graph::TransitionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ResidualNorm {
    #[default]
    L1,
    L2,
}

impl ResidualNorm {
    fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            ResidualNorm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            ResidualNorm::L2 => libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PprConfig {
    /// Probability of following an out-edge rather than restarting.
    pub damping: f64,
    pub epsilon: f64,
    pub max_steps: usize,
    /// Step cap for the reachability probe.
    pub spread_step: usize,
    /// Largest fraction of the graph the probe may cover and still shrink.
    pub spread_percent: f64,
    pub norm: ResidualNorm,
    /// When false the probe is skipped and the iteration always runs on the
    /// full matrix.
    pub shrinking: bool,
}

impl Default for PprConfig {
    fn default() -> Self {
        PprConfig {
            damping: defaults::DAMPING,
            epsilon: defaults::EPSILON,
            max_steps: defaults::MAX_STEPS,
            spread_step: defaults::SPREAD_STEP,
            spread_percent: defaults::SPREAD_PERCENT,
            norm: ResidualNorm::L1,
            shrinking: true,
        }
    }
}

impl PprConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::param(format!(
                "damping must be in (0, 1), got {}",
                self.damping
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::param(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::param("max_steps must be at least 1"));
        }
        if self.spread_step == 0 {
            return Err(Error::param("spread_step must be at least 1"));
        }
        if !(self.spread_percent > 0.0 && self.spread_percent <= 1.0) {
            return Err(Error::param(format!(
                "spread_percent must be in (0, 1], got {}",
                self.spread_percent
            )));
        }
        Ok(())
    }
}

/// Stationary distribution of a walk restarting at `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PprVector {
    pub seed: usize,
    pub values: Vec<f64>,
    pub iterations_used: usize,
    /// Last residual between consecutive iterates.
    pub residual: f64,
    pub converged: bool,
    pub shrunk: bool,
    /// Size of the matrix the iteration ran on.
    pub reduced_size: usize,
}

/// Reachability probe. Grows the nonzero pattern of `v <- v + T v` from the
/// seed indicator for at most `spread_step` steps. Returns the reachable set
/// (sorted) if the pattern stops growing while it is still smaller than
/// `spread_percent * n`; otherwise `None`.
pub fn shrink_probe(t: &TransitionMatrix, seed: usize, cfg: &PprConfig) -> Option<Vec<usize>> {
    let n = t.n_nodes();
    let bound = n as f64 * cfg.spread_percent;
    let mut mask = vec![false; n];
    mask[seed] = true;
    let mut next = mask.clone();
    let mut nz = 1usize;
    let mut steps = 0usize;
    while (nz as f64) < bound && steps < cfg.spread_step {
        steps += 1;
        let mut nzn = 0usize;
        for (i, slot) in next.iter_mut().enumerate() {
            *slot = mask[i] || t.row(i).any(|(j, v)| v != 0.0 && mask[j]);
            nzn += *slot as usize;
        }
        core::mem::swap(&mut mask, &mut next);
        if nzn == nz {
            return Some((0..n).filter(|&i| mask[i]).collect());
        }
        nz = nzn;
    }
    None
}

/// Personalized PageRank of `seed` by shrinking plus power iteration.
///
/// Hitting `max_steps` is not an error; the last iterate is returned with
/// `converged == false`.
pub fn ppr(t: &TransitionMatrix, seed: usize, cfg: &PprConfig) -> Result<PprVector> {
    ppr_impl(t, seed, cfg, None)
}

/// Like [`ppr`], also returning the residual after every iteration.
pub fn ppr_traced(
    t: &TransitionMatrix,
    seed: usize,
    cfg: &PprConfig,
) -> Result<(PprVector, Vec<f64>)> {
    let mut trace = Vec::new();
    let v = ppr_impl(t, seed, cfg, Some(&mut trace))?;
    Ok((v, trace))
}

fn ppr_impl(
    t: &TransitionMatrix,
    seed: usize,
    cfg: &PprConfig,
    trace: Option<&mut Vec<f64>>,
) -> Result<PprVector> {
    cfg.validate()?;
    let n = t.n_nodes();
    if seed >= n {
        return Err(Error::NodeOutOfRange {
            index: seed,
            n_nodes: n,
        });
    }
    let reachable = if cfg.shrinking {
        shrink_probe(t, seed, cfg)
    } else {
        None
    };
    match reachable {
        Some(keep) => {
            let (sub, map) = t.induced_subgraph(&keep)?;
            let local_seed = map.binary_search(&seed).expect("seed is always reachable");
            let it = power_iteration(&sub, local_seed, cfg, trace);
            let mut values = vec![0.0; n];
            for (r, &orig) in map.iter().enumerate() {
                values[orig] = it.values[r];
            }
            Ok(PprVector {
                seed,
                values,
                iterations_used: it.steps,
                residual: it.residual,
                converged: it.converged,
                shrunk: true,
                reduced_size: map.len(),
            })
        }
        None => {
            let it = power_iteration(t, seed, cfg, trace);
            Ok(PprVector {
                seed,
                values: it.values,
                iterations_used: it.steps,
                residual: it.residual,
                converged: it.converged,
                shrunk: false,
                reduced_size: n,
            })
        }
    }
}

struct Iterate {
    values: Vec<f64>,
    steps: usize,
    residual: f64,
    converged: bool,
}

fn power_iteration(
    t: &TransitionMatrix,
    seed: usize,
    cfg: &PprConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Iterate {
    let n = t.n_nodes();
    let mut rank = vec![0.0; n];
    rank[seed] = 1.0;
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut steps = 0;
    let mut converged = false;
    while steps < cfg.max_steps {
        steps += 1;
        t.mul_vec_into(&rank, &mut next);
        let propagated: f64 = next.iter().sum();
        // mass lost at dangling nodes (or cut edges) goes back to the seed
        if propagated < 1.0 {
            next[seed] += 1.0 - propagated;
        }
        for x in next.iter_mut() {
            *x *= cfg.damping;
        }
        next[seed] += 1.0 - cfg.damping;
        residual = cfg.norm.distance(&rank, &next);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(residual);
        }
        core::mem::swap(&mut rank, &mut next);
        if residual <= cfg.epsilon {
            converged = true;
            break;
        }
    }
    Iterate {
        values: rank,
        steps,
        residual,
        converged,
    }
}

/// Runs [`ppr`] for every seed, in order. Errors carry the failing seed.
pub fn ppr_batch(t: &TransitionMatrix, seeds: &[usize], cfg: &PprConfig) -> Result<Vec<PprVector>> {
    seeds
        .iter()
        .map(|&s| {
            ppr(t, s, cfg).map_err(|e| Error::Seed {
                seed: s,
                source: Box::new(e),
            })
        })
        .collect()
}
