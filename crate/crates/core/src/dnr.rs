//! Training the neural stack on personalized PageRank vectors.
//!
//! Rank vectors of the training nodes are computed once, cached in sparse
//! form, and replayed in a fresh shuffled order every epoch. Three targets
//! are supported: label rows (supervised embedding and end-to-end
//! classification) and binarized adjacency rows (unsupervised embedding).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::defaults;
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelMatrix, TransitionMatrix};
use crate::matrix::Matrix;
use crate::neural::{adam_step, Activation, AdamConfig, LayerSpec, NeuralModel};
use crate::pprs::{ppr, PprConfig};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TrainMode {
    SupervisedEmbed,
    UnsupervisedEmbed,
    EndToEnd,
}

impl TrainMode {
    pub fn uses_labels(self) -> bool {
        !matches!(self, TrainMode::UnsupervisedEmbed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Architecture {
    Plain,
    Conv {
        filters: usize,
        kernel: usize,
        pool: usize,
    },
    Attention,
}

impl Architecture {
    pub fn default_conv() -> Self {
        Architecture::Conv {
            filters: defaults::CONV_FILTERS,
            kernel: defaults::CONV_KERNEL,
            pool: defaults::CONV_POOL,
        }
    }

    /// Layer stack for this architecture: optional front layer, the
    /// embedding layer, then a sigmoid output of width `out_dim`.
    pub fn layer_specs(
        self,
        embed_dim: usize,
        hidden: Activation,
        out_dim: usize,
    ) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(3);
        match self {
            Architecture::Plain => {}
            Architecture::Conv {
                filters,
                kernel,
                pool,
            } => specs.push(LayerSpec::Conv1d {
                filters,
                kernel,
                pool,
                activation: Activation::None,
            }),
            Architecture::Attention => specs.push(LayerSpec::AttentionGate),
        }
        specs.push(LayerSpec::Dense {
            out_dim: embed_dim,
            activation: hidden,
        });
        specs.push(LayerSpec::Dense {
            out_dim,
            activation: Activation::Sigmoid,
        });
        specs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub architecture: Architecture,
    pub embed_dim: usize,
    pub hidden_activation: Activation,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Minimum decrease of the epoch-mean loss that counts as progress.
    pub plateau_tolerance: f64,
    pub seed: u64,
    pub ppr: PprConfig,
    pub adam: AdamConfig,
    /// Bound on batches buffered between rank producers and the trainer.
    pub queue_capacity: usize,
}

impl TrainConfig {
    pub fn new(mode: TrainMode, architecture: Architecture) -> Self {
        let max_epochs = match architecture {
            Architecture::Attention => defaults::ATTENTION_EPOCHS,
            _ => defaults::MAX_EPOCHS,
        };
        TrainConfig {
            mode,
            architecture,
            embed_dim: defaults::EMBED_DIM,
            hidden_activation: Activation::Relu,
            batch_size: defaults::BATCH_SIZE,
            max_epochs,
            patience: defaults::PATIENCE,
            plateau_tolerance: defaults::PLATEAU_TOLERANCE,
            seed: 0,
            ppr: PprConfig::default(),
            adam: AdamConfig::default(),
            queue_capacity: defaults::QUEUE_CAPACITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be at least 1"));
        }
        if self.embed_dim == 0 {
            return Err(Error::param("embedding dimension must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::param("patience must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::param("max_epochs must be at least 1"));
        }
        if self.queue_capacity == 0 {
            return Err(Error::param("queue capacity must be at least 1"));
        }
        if self.plateau_tolerance.is_nan() || self.plateau_tolerance < 0.0 {
            return Err(Error::param("plateau tolerance must be >= 0"));
        }
        self.ppr.validate()?;
        self.adam.validate()
    }

    /// FNV-1a digest of the configuration, for provenance records.
    pub fn digest(&self) -> u64 {
        let text = format!("{self:?}");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
        })
    }
}

/// Nonzero entries of a rank vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRank {
    pub len: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRank {
    pub fn from_dense(values: &[f64]) -> Self {
        let mut indices = Vec::new();
        let mut vals = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                indices.push(i as u32);
                vals.push(v);
            }
        }
        SparseRank {
            len: values.len(),
            indices,
            values: vals,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.len];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }
}

/// In-memory store of rank vectors keyed by node.
pub type RankCache = BTreeMap<usize, SparseRank>;

/// Supplies dense rank vectors to the trainer.
pub trait RankSource {
    /// Rank vectors for `nodes`, in order. When `retain` is set the source
    /// keeps them for later calls.
    fn ranks(&mut self, nodes: &[usize], retain: bool) -> Result<Vec<Vec<f64>>>;

    /// Called with the full visiting order before each epoch.
    fn begin_epoch(&mut self, _epoch: usize, _order: &[usize]) {}
}

/// Computes rank vectors on demand and caches the retained ones.
#[derive(Debug)]
pub struct CachedRanks<'t> {
    transition: &'t TransitionMatrix,
    cfg: PprConfig,
    cache: RankCache,
    computed: usize,
}

impl<'t> CachedRanks<'t> {
    pub fn new(transition: &'t TransitionMatrix, cfg: PprConfig) -> Self {
        Self::with_cache(transition, cfg, RankCache::new())
    }

    pub fn with_cache(transition: &'t TransitionMatrix, cfg: PprConfig, cache: RankCache) -> Self {
        CachedRanks {
            transition,
            cfg,
            cache,
            computed: 0,
        }
    }

    /// Number of rank vectors computed (not served from cache) so far.
    pub fn computed(&self) -> usize {
        self.computed
    }

    pub fn cache(&self) -> &RankCache {
        &self.cache
    }

    pub fn into_cache(self) -> RankCache {
        self.cache
    }
}

impl RankSource for CachedRanks<'_> {
    fn ranks(&mut self, nodes: &[usize], retain: bool) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(nodes.len());
        for &node in nodes {
            if let Some(hit) = self.cache.get(&node) {
                out.push(hit.to_dense());
                continue;
            }
            let v = ppr(self.transition, node, &self.cfg)?;
            self.computed += 1;
            if retain {
                self.cache.insert(node, SparseRank::from_dense(&v.values));
            }
            out.push(v.values);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    MaxEpochs,
    Plateau,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: NeuralModel,
    pub mode: TrainMode,
    /// Instance-weighted mean loss of each epoch run.
    pub epoch_losses: Vec<f64>,
    pub stop_reason: StopReason,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.epoch_losses.len()
    }
}

/// Step-wise training loop. Callers that produce rank vectors themselves
/// (for example on worker threads) drive it epoch by epoch; [`train`] and
/// [`train_with_source`] wrap it.
pub struct Trainer<'a> {
    graph: &'a Graph,
    labels: Option<&'a LabelMatrix>,
    train_nodes: Vec<usize>,
    cfg: TrainConfig,
    model: NeuralModel,
    shuffle: ChaCha8Rng,
    epoch_losses: Vec<f64>,
    epoch_sum: f64,
    epoch_count: usize,
    batch_index: usize,
    best: f64,
    stale: usize,
    stopped: Option<StopReason>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        graph: &'a Graph,
        labels: Option<&'a LabelMatrix>,
        train_nodes: &[usize],
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = graph.n_nodes();
        if train_nodes.is_empty() {
            return Err(Error::param("no training nodes"));
        }
        if let Some(&bad) = train_nodes.iter().find(|&&u| u >= n) {
            return Err(Error::NodeOutOfRange {
                index: bad,
                n_nodes: n,
            });
        }
        let out_dim = if cfg.mode.uses_labels() {
            let labels = labels.ok_or_else(|| Error::param("this training mode needs labels"))?;
            if labels.n_nodes() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: labels.n_nodes(),
                });
            }
            if labels.n_classes() == 0 {
                return Err(Error::param("label matrix has no classes"));
            }
            if let Some(&u) = train_nodes.iter().find(|&&u| !labels.is_labeled(u)) {
                return Err(Error::Unlabeled(u));
            }
            labels.n_classes()
        } else {
            n
        };
        let specs = cfg
            .architecture
            .layer_specs(cfg.embed_dim, cfg.hidden_activation, out_dim);
        let model = NeuralModel::init(n, &specs, cfg.seed)?;
        Ok(Trainer {
            graph,
            labels: if cfg.mode.uses_labels() { labels } else { None },
            train_nodes: train_nodes.to_vec(),
            cfg,
            model,
            shuffle: rng::stream(cfg.seed, Stream::Shuffle, 0),
            epoch_losses: Vec::new(),
            epoch_sum: 0.0,
            epoch_count: 0,
            batch_index: 0,
            best: f64::INFINITY,
            stale: 0,
            stopped: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &NeuralModel {
        &self.model
    }

    /// Index of the epoch about to run (0-based).
    pub fn epoch(&self) -> usize {
        self.epoch_losses.len()
    }

    pub fn is_done(&self) -> bool {
        self.stopped.is_some()
    }

    /// Starts the next epoch and returns its visiting order, or `None` once a
    /// stopping rule has fired.
    pub fn next_epoch(&mut self) -> Option<Vec<usize>> {
        if self.stopped.is_some() {
            return None;
        }
        self.epoch_sum = 0.0;
        self.epoch_count = 0;
        self.batch_index = 0;
        let mut order = self.train_nodes.clone();
        order.shuffle(&mut self.shuffle);
        Some(order)
    }

    fn target(&self, node: usize) -> Vec<f64> {
        match self.labels {
            Some(labels) => labels.target(node),
            None => self.graph.binary_adjacency_row(node),
        }
    }

    /// One optimizer step on a batch; returns the batch-mean loss.
    pub fn train_batch<X: AsRef<[f64]>>(&mut self, nodes: &[usize], inputs: &[X]) -> Result<f64> {
        if nodes.len() != inputs.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                actual: inputs.len(),
            });
        }
        let targets: Vec<Vec<f64>> = nodes.iter().map(|&u| self.target(u)).collect();
        let (loss, grads) = self.model.loss_and_gradients(inputs, &targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epoch(),
                batch: self.batch_index,
            });
        }
        adam_step(&mut self.model, &grads, &self.cfg.adam)?;
        self.epoch_sum += loss * nodes.len() as f64;
        self.epoch_count += nodes.len();
        self.batch_index += 1;
        Ok(loss)
    }

    /// Closes the epoch, applies the stopping rules and returns the
    /// epoch-mean loss.
    pub fn end_epoch(&mut self) -> f64 {
        let mean = if self.epoch_count == 0 {
            0.0
        } else {
            self.epoch_sum / self.epoch_count as f64
        };
        self.epoch_losses.push(mean);
        if mean < self.best - self.cfg.plateau_tolerance {
            self.best = mean;
            self.stale = 0;
        } else {
            self.stale += 1;
            if mean < self.best {
                self.best = mean;
            }
        }
        if self.stale >= self.cfg.patience {
            self.stopped = Some(StopReason::Plateau);
        } else if self.epoch_losses.len() >= self.cfg.max_epochs {
            self.stopped = Some(StopReason::MaxEpochs);
        }
        mean
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            model: self.model,
            mode: self.cfg.mode,
            epoch_losses: self.epoch_losses,
            stop_reason: self.stopped.unwrap_or(StopReason::MaxEpochs),
        }
    }
}

/// Trains against rank vectors supplied by `source`.
pub fn train_with_source<S: RankSource>(
    graph: &Graph,
    labels: Option<&LabelMatrix>,
    train_nodes: &[usize],
    cfg: TrainConfig,
    source: &mut S,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(graph, labels, train_nodes, cfg)?;
    while let Some(order) = trainer.next_epoch() {
        source.begin_epoch(trainer.epoch(), &order);
        for batch in order.chunks(cfg.batch_size) {
            let inputs = source.ranks(batch, true)?;
            trainer.train_batch(batch, &inputs)?;
        }
        trainer.end_epoch();
    }
    Ok(trainer.finish())
}

/// Trains a model on `graph`, returning it together with the rank cache of
/// the training nodes.
pub fn train(
    graph: &Graph,
    labels: Option<&LabelMatrix>,
    train_nodes: &[usize],
    cfg: TrainConfig,
) -> Result<(TrainOutcome, RankCache)> {
    let transition = TransitionMatrix::from_graph(graph);
    let mut source = CachedRanks::new(&transition, cfg.ppr);
    let outcome = train_with_source(graph, labels, train_nodes, cfg, &mut source)?;
    Ok((outcome, source.into_cache()))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub mode: TrainMode,
    pub config_digest: u64,
    pub epochs_run: usize,
}

/// One embedding row per requested node, in request order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingMatrix {
    pub nodes: Vec<usize>,
    pub values: Matrix,
    pub provenance: Provenance,
}

fn check_model(model: &NeuralModel, n_nodes: usize, cfg: &TrainConfig) -> Result<()> {
    if model.input_dim != n_nodes {
        return Err(Error::ModelMismatch(format!(
            "model expects {} inputs, graph has {} nodes",
            model.input_dim, n_nodes
        )));
    }
    let expected =
        cfg.architecture
            .layer_specs(cfg.embed_dim, cfg.hidden_activation, model.output_dim());
    let actual: Vec<LayerSpec> = model.layers.iter().map(|l| l.spec).collect();
    if expected != actual {
        return Err(Error::ModelMismatch(
            "layer stack does not match the configured architecture".into(),
        ));
    }
    Ok(())
}

fn check_nodes(nodes: &[usize], n: usize) -> Result<()> {
    match nodes.iter().find(|&&u| u >= n) {
        Some(&bad) => Err(Error::NodeOutOfRange {
            index: bad,
            n_nodes: n,
        }),
        None => Ok(()),
    }
}

/// Hidden-layer activations for `nodes`. Cached rank vectors are reused;
/// missing ones are computed and not retained.
pub fn embed<S: RankSource>(
    outcome: &TrainOutcome,
    source: &mut S,
    n_nodes: usize,
    nodes: &[usize],
    cfg: &TrainConfig,
) -> Result<EmbeddingMatrix> {
    let model = &outcome.model;
    check_model(model, n_nodes, cfg)?;
    check_nodes(nodes, n_nodes)?;
    let mut values = Matrix::zeros(nodes.len(), cfg.embed_dim);
    for (chunk_idx, chunk) in nodes.chunks(cfg.batch_size.max(1)).enumerate() {
        let inputs = source.ranks(chunk, false)?;
        for (k, x) in inputs.iter().enumerate() {
            let row = model.embedding(x)?;
            values
                .row_mut(chunk_idx * cfg.batch_size.max(1) + k)
                .copy_from_slice(&row);
        }
    }
    if values.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::ModelMismatch(
            "embedding contains non-finite values".into(),
        ));
    }
    Ok(EmbeddingMatrix {
        nodes: nodes.to_vec(),
        values,
        provenance: Provenance {
            mode: outcome.mode,
            config_digest: cfg.digest(),
            epochs_run: outcome.epochs_run(),
        },
    })
}

/// Sigmoid class probabilities for `nodes` from an end-to-end model.
pub fn classify_e2e<S: RankSource>(
    outcome: &TrainOutcome,
    source: &mut S,
    n_nodes: usize,
    nodes: &[usize],
    cfg: &TrainConfig,
) -> Result<Matrix> {
    if outcome.mode != TrainMode::EndToEnd || cfg.mode != TrainMode::EndToEnd {
        return Err(Error::ModelMismatch(
            "classification needs a model trained end to end".into(),
        ));
    }
    let model = &outcome.model;
    check_model(model, n_nodes, cfg)?;
    check_nodes(nodes, n_nodes)?;
    let mut probs = Matrix::zeros(nodes.len(), model.output_dim());
    let step = cfg.batch_size.max(1);
    for (chunk_idx, chunk) in nodes.chunks(step).enumerate() {
        let inputs = source.ranks(chunk, false)?;
        for (k, x) in inputs.iter().enumerate() {
            let p = model.forward(x)?;
            probs.row_mut(chunk_idx * step + k).copy_from_slice(&p);
        }
    }
    Ok(probs)
}
