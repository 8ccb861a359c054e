//! Multi-threaded rank computation and the pipelined training loop.
//!
//! Rank vectors are pure functions of the shared transition matrix, so they
//! can be computed on any number of threads. Training stays on one thread:
//! during the first epoch a producer thread computes the upcoming batches
//! and hands them over a bounded channel, and later epochs replay the cache.

use std::sync::mpsc::sync_channel;
use std::thread;

use dnr_core::dnr::{RankCache, RankSource, SparseRank, TrainConfig, TrainOutcome, Trainer};
use dnr_core::{ppr, Error, Graph, LabelMatrix, PprConfig, PprVector, TransitionMatrix};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{DnrError, Result};

/// Rank vectors for `seeds`, computed in parallel. Output order follows
/// `seeds` regardless of completion order.
pub fn par_ppr_batch(
    t: &TransitionMatrix,
    seeds: &[usize],
    cfg: &PprConfig,
) -> dnr_core::Result<Vec<PprVector>> {
    seeds
        .par_iter()
        .map(|&s| {
            ppr(t, s, cfg).map_err(|e| Error::Seed {
                seed: s,
                source: Box::new(e),
            })
        })
        .collect()
}

fn par_dense(
    t: &TransitionMatrix,
    nodes: &[usize],
    cfg: &PprConfig,
) -> dnr_core::Result<Vec<Vec<f64>>> {
    Ok(par_ppr_batch(t, nodes, cfg)?
        .into_iter()
        .map(|v| v.values)
        .collect())
}

/// Sparse rank vectors for every node in `nodes`.
pub fn precompute_ranks(
    t: &TransitionMatrix,
    nodes: &[usize],
    cfg: &PprConfig,
) -> dnr_core::Result<RankCache> {
    let vectors = par_ppr_batch(t, nodes, cfg)?;
    Ok(vectors
        .into_iter()
        .map(|v| (v.seed, SparseRank::from_dense(&v.values)))
        .collect())
}

/// Serves rank vectors from a shared, read-only cache and computes the
/// missing ones on demand without storing them.
pub struct SharedRanks<'a> {
    transition: &'a TransitionMatrix,
    cfg: PprConfig,
    cache: &'a RankCache,
}

impl<'a> SharedRanks<'a> {
    pub fn new(transition: &'a TransitionMatrix, cfg: PprConfig, cache: &'a RankCache) -> Self {
        SharedRanks {
            transition,
            cfg,
            cache,
        }
    }
}

impl RankSource for SharedRanks<'_> {
    fn ranks(&mut self, nodes: &[usize], _retain: bool) -> dnr_core::Result<Vec<Vec<f64>>> {
        nodes
            .iter()
            .map(|&u| match self.cache.get(&u) {
                Some(hit) => Ok(hit.to_dense()),
                None => ppr(self.transition, u, &self.cfg).map(|v| v.values),
            })
            .collect()
    }
}

/// Trains like [`dnr_core::dnr::train`], overlapping rank computation with
/// optimization. The first epoch's batches are produced ahead of the trainer
/// by a worker thread, at most `cfg.queue_capacity` batches in flight; each
/// batch's vectors are computed in parallel. Results are bitwise identical
/// to the sequential loop. Rank vectors are computed on `pool` when given,
/// otherwise on the global pool.
pub fn train_pipelined(
    graph: &Graph,
    transition: &TransitionMatrix,
    labels: Option<&LabelMatrix>,
    train_nodes: &[usize],
    cfg: TrainConfig,
    pool: Option<&ThreadPool>,
) -> Result<(TrainOutcome, RankCache)> {
    let mut trainer = Trainer::new(graph, labels, train_nodes, cfg)?;
    let mut cache = RankCache::new();
    let Some(order) = trainer.next_epoch() else {
        return Ok((trainer.finish(), cache));
    };
    let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();

    thread::scope(|scope| -> Result<()> {
        let (tx, rx) = sync_channel(cfg.queue_capacity);
        let queued = &batches;
        scope.spawn(move || {
            for batch in queued {
                let ranks = match pool {
                    Some(p) => p.install(|| par_dense(transition, batch, &cfg.ppr)),
                    None => par_dense(transition, batch, &cfg.ppr),
                };
                let failed = ranks.is_err();
                if tx.send(ranks).is_err() || failed {
                    break;
                }
            }
        });
        for batch in &batches {
            let inputs = rx
                .recv()
                .map_err(|_| DnrError::Worker("rank producer stopped early".into()))??;
            trainer.train_batch(batch, &inputs)?;
            for (&u, x) in batch.iter().zip(&inputs) {
                cache.insert(u, SparseRank::from_dense(x));
            }
        }
        Ok(())
    })?;
    trainer.end_epoch();

    let mut source = SharedRanks::new(transition, cfg.ppr, &cache);
    while let Some(order) = trainer.next_epoch() {
        for batch in order.chunks(cfg.batch_size) {
            let inputs = source.ranks(batch, true)?;
            trainer.train_batch(batch, &inputs)?;
        }
        trainer.end_epoch();
    }
    Ok((trainer.finish(), cache))
}
