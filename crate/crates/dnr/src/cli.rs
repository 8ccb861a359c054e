//! The `dnr` command line: `rank`, `embed`, `classify`, `evaluate` and
//! `replay`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dnr_core::dnr::{classify_e2e, embed, Architecture, RankCache, TrainConfig, TrainMode};
use dnr_core::eval::{micro_macro_f1, predict_topk, split_fraction};
use dnr_core::neural::{Activation, AdamConfig};
use dnr_core::rng::{self, Stream};
use dnr_core::{defaults, Error, Graph, LabelMatrix, PprConfig, ResidualNorm, TransitionMatrix};
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{DnrError, ExitKind, Result};
use crate::io::{self, RankFormat};
use crate::manifest::{InputDigest, RunManifest, StageClock};
use crate::parallel::{par_ppr_batch, precompute_ranks, train_pipelined, SharedRanks};
use crate::protocol::{run_protocol, EvalProtocol, Pipeline};

const EXIT_STATUS_HELP: &str = "\
Exit status:
  0  success
  1  internal failure (for example a non-finite training loss)
  2  usage error: unknown flag, missing or malformed argument
  3  input/output error: missing or unreadable file
  4  parameter value out of range
  5  malformed or inconsistent input data

Errors are reported on stderr as a single line:
  dnr: error kind=<usage|io|invalid-parameter|data|internal> exit=<code>: <message>";

#[derive(Debug, Parser)]
#[command(
    name = "dnr",
    version,
    about = "Personalized PageRank vectors, node-ranking embeddings and node classification",
    after_help = EXIT_STATUS_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Compute personalized PageRank vectors for seed nodes.
    #[command(after_help = EXIT_STATUS_HELP)]
    Rank(RankArgs),
    /// Train a network on rank vectors and write node embeddings.
    #[command(after_help = EXIT_STATUS_HELP)]
    Embed(EmbedArgs),
    /// Train end to end and write class probabilities for held-out nodes.
    #[command(after_help = EXIT_STATUS_HELP)]
    Classify(ClassifyArgs),
    /// Run the train-fraction sweep and write a JSON report.
    #[command(after_help = EXIT_STATUS_HELP)]
    Evaluate(EvaluateArgs),
    /// Re-run the command recorded in a manifest.
    #[command(after_help = EXIT_STATUS_HELP)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GraphArgs {
    /// Edge list: `src dst [weight]` per line, `#` comments allowed.
    #[arg(long)]
    pub graph: PathBuf,
    /// Treat edges as directed (default: undirected).
    #[arg(long)]
    pub directed: bool,
    /// Use the third column as edge weight.
    #[arg(long)]
    pub weighted: bool,
}

impl GraphArgs {
    fn load(&self) -> Result<Graph> {
        io::load_graph(&self.graph, self.directed, self.weighted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormArg {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PprArgs {
    /// Probability of following an edge instead of restarting.
    #[arg(long, default_value_t = defaults::DAMPING)]
    pub damping: f64,
    /// Convergence threshold on the change between iterations.
    #[arg(long, default_value_t = defaults::EPSILON)]
    pub epsilon: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = defaults::MAX_STEPS)]
    pub max_steps: usize,
    /// Step cap of the reachability probe that decides shrinking.
    #[arg(long, default_value_t = defaults::SPREAD_STEP)]
    pub spread_step: usize,
    /// Largest share of the graph the probe may reach and still shrink.
    #[arg(long, default_value_t = defaults::SPREAD_PERCENT)]
    pub spread_percent: f64,
    /// Norm of the convergence test.
    #[arg(long, value_enum, default_value_t = NormArg::L1)]
    pub norm: NormArg,
    /// Always iterate on the full matrix.
    #[arg(long)]
    pub no_shrink: bool,
}

impl PprArgs {
    pub fn config(&self) -> PprConfig {
        PprConfig {
            damping: self.damping,
            epsilon: self.epsilon,
            max_steps: self.max_steps,
            spread_step: self.spread_step,
            spread_percent: self.spread_percent,
            norm: match self.norm {
                NormArg::L1 => ResidualNorm::L1,
                NormArg::L2 => ResidualNorm::L2,
            },
            shrinking: !self.no_shrink,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchArg {
    Plain,
    Conv,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationArg {
    Relu,
    LeakyRelu,
    Elu,
    Sigmoid,
    None,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::LeakyRelu => Activation::LeakyRelu,
            ActivationArg::Elu => Activation::Elu,
            ActivationArg::Sigmoid => Activation::Sigmoid,
            ActivationArg::None => Activation::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Network architecture.
    #[arg(long, value_enum, default_value_t = ArchArg::Plain)]
    pub arch: ArchArg,
    /// Convolution filters (conv architecture).
    #[arg(long, default_value_t = defaults::CONV_FILTERS)]
    pub filters: usize,
    /// Convolution kernel width (conv architecture).
    #[arg(long, default_value_t = defaults::CONV_KERNEL)]
    pub kernel: usize,
    /// Average-pool width (conv architecture).
    #[arg(long, default_value_t = defaults::CONV_POOL)]
    pub pool: usize,
    /// Embedding (hidden layer) width.
    #[arg(long, default_value_t = defaults::EMBED_DIM)]
    pub dim: usize,
    /// Maximum epochs [default: 20, or 100 for the attention architecture].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size.
    #[arg(long, default_value_t = defaults::BATCH_SIZE)]
    pub batch: usize,
    /// Epochs without improvement of the epoch-mean loss before stopping.
    #[arg(long, default_value_t = defaults::PATIENCE)]
    pub patience: usize,
    /// Smallest loss decrease that counts as improvement.
    #[arg(long, default_value_t = defaults::PLATEAU_TOLERANCE)]
    pub plateau_tolerance: f64,
    /// Hidden-layer activation.
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
    /// Adam learning rate.
    #[arg(long, default_value_t = defaults::ADAM_LR)]
    pub learning_rate: f64,
    /// Batches buffered between rank producers and the trainer.
    #[arg(long, default_value_t = defaults::QUEUE_CAPACITY)]
    pub queue_capacity: usize,
    /// Seed for splits, initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    pub fn config(&self, mode: TrainMode, ppr: PprConfig) -> TrainConfig {
        let architecture = match self.arch {
            ArchArg::Plain => Architecture::Plain,
            ArchArg::Conv => Architecture::Conv {
                filters: self.filters,
                kernel: self.kernel,
                pool: self.pool,
            },
            ArchArg::Attention => Architecture::Attention,
        };
        let mut cfg = TrainConfig::new(mode, architecture);
        if let Some(e) = self.epochs {
            cfg.max_epochs = e;
        }
        cfg.embed_dim = self.dim;
        cfg.batch_size = self.batch;
        cfg.patience = self.patience;
        cfg.plateau_tolerance = self.plateau_tolerance;
        cfg.hidden_activation = self.activation.into();
        cfg.adam = AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        };
        cfg.queue_capacity = self.queue_capacity;
        cfg.seed = self.seed;
        cfg.ppr = ppr;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RankArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub ppr: PprArgs,
    /// Node whose rank vector to compute; repeat for several.
    #[arg(long = "seed-node")]
    pub seed_nodes: Vec<String>,
    /// Compute the rank vector of every node.
    #[arg(long, conflicts_with = "seed_nodes")]
    pub all: bool,
    /// Output layout.
    #[arg(long, value_enum, default_value_t = RankFormat::Dense)]
    pub format: RankFormat,
    /// Also write `internal_index<TAB>node_id` to this file.
    #[arg(long)]
    pub node_map: Option<PathBuf>,
    /// Rank vector TSV
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedMode {
    Supervised,
    Unsupervised,
}

impl From<EmbedMode> for TrainMode {
    fn from(m: EmbedMode) -> Self {
        match m {
            EmbedMode::Supervised => TrainMode::SupervisedEmbed,
            EmbedMode::Unsupervised => TrainMode::UnsupervisedEmbed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Label file: `node_id<TAB>label1,label2,...`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Training target: label rows or adjacency rows.
    #[arg(long, value_enum, default_value_t = EmbedMode::Supervised)]
    pub mode: EmbedMode,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub ppr: PprArgs,
    /// Train on the nodes listed in this file, one id per line.
    #[arg(long, conflicts_with = "train_fraction")]
    pub train_nodes: Option<PathBuf>,
    /// Train on a seeded sample of this share of the candidate nodes
    /// [default: all labeled nodes, or all nodes when unsupervised].
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Also save the trained model as a JSON checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Embedding TSV: `node_id` followed by the embedding values
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Label file: `node_id<TAB>label1,label2,...`.
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub ppr: PprArgs,
    /// Train on the nodes listed in this file, one id per line.
    #[arg(long, conflicts_with = "train_fraction")]
    pub train_nodes: Option<PathBuf>,
    /// Share of labeled nodes to train on [default: 0.5].
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// JSON summary path [default: <out>.summary.json].
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Also save the trained model as a JSON checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Prediction TSV: `node_id<TAB>class<TAB>probability` per held-out node and class
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineArg {
    DnrEmbed,
    DnrE2e,
    EmbeddingFile,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Label file: `node_id<TAB>label1,label2,...`.
    #[arg(long)]
    pub labels: PathBuf,
    /// What produces the class scores.
    #[arg(long, value_enum)]
    pub pipeline: PipelineArg,
    /// Embedding target for the dnr-embed pipeline.
    #[arg(long, value_enum, default_value_t = EmbedMode::Supervised)]
    pub mode: EmbedMode,
    /// Embedding TSV for the embedding-file pipeline.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub ppr: PprArgs,
    /// Comma-separated classifier train fractions.
    #[arg(long, value_delimiter = ',', default_values_t = defaults::TRAIN_FRACTIONS.to_vec())]
    pub fractions: Vec<f64>,
    /// Repeats per fraction.
    #[arg(long, default_value_t = defaults::REPEATS)]
    pub repeats: usize,
    /// Share of labeled nodes reserved for training the network.
    #[arg(long, default_value_t = defaults::CONSTRUCTION_FRACTION)]
    pub construction_fraction: f64,
    /// L2 penalty of the logistic regression.
    #[arg(long, default_value_t = defaults::L2_LAMBDA)]
    pub lambda: f64,
    /// Leave wall-clock timings out of the report.
    #[arg(long)]
    pub omit_timing: bool,
    /// Also write the result rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON report
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write the outputs into this directory instead of their recorded paths.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn summary_path(a: &ClassifyArgs) -> PathBuf {
    a.summary.clone().unwrap_or_else(|| {
        let mut name = a.out.as_os_str().to_owned();
        name.push(".summary.json");
        PathBuf::from(name)
    })
}

impl Command {
    /// Primary output file of the command.
    pub fn output(&self) -> Option<&Path> {
        match self {
            Command::Rank(a) => Some(&a.out),
            Command::Embed(a) => Some(&a.out),
            Command::Classify(a) => Some(&a.out),
            Command::Evaluate(a) => Some(&a.out),
            Command::Replay(_) => None,
        }
    }

    /// Moves every output path into `dir`, keeping file names.
    pub fn redirect_outputs(&mut self, dir: &Path) {
        let move_to = |p: &mut PathBuf| {
            if let Some(name) = p.file_name() {
                *p = dir.join(name);
            }
        };
        match self {
            Command::Rank(a) => {
                move_to(&mut a.out);
                a.node_map.as_mut().map(move_to);
            }
            Command::Embed(a) => {
                move_to(&mut a.out);
                a.checkpoint.as_mut().map(move_to);
            }
            Command::Classify(a) => {
                move_to(&mut a.out);
                a.summary.as_mut().map(move_to);
                a.checkpoint.as_mut().map(move_to);
            }
            Command::Evaluate(a) => {
                move_to(&mut a.out);
                a.csv.as_mut().map(move_to);
            }
            Command::Replay(_) => {}
        }
    }
}

fn thread_pool(threads: Option<usize>) -> Result<ThreadPool> {
    if threads == Some(0) {
        return Err(Error::InvalidParameter("--threads must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| DnrError::Worker(format!("thread pool: {e}")))
}

/// What a finished command reports for its manifest.
struct Record {
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
}

fn digests(paths: &[&Path]) -> Result<Vec<InputDigest>> {
    paths.iter().map(|p| InputDigest::of(p)).collect()
}

fn warn_unconverged(graph: &Graph, seeds: impl IntoIterator<Item = (usize, bool)>) {
    for (seed, converged) in seeds {
        if !converged {
            eprintln!(
                "dnr: warning kind=not-converged node={}: iteration cap reached",
                graph.node_name(seed)
            );
        }
    }
}

fn rank(a: &RankArgs, clock: &mut StageClock) -> Result<Record> {
    let pool = thread_pool(a.threads)?;
    let cfg = a.ppr.config();
    cfg.validate()?;
    let graph = clock.time("load", || a.graph.load())?;
    let seeds: Vec<usize> = if a.all {
        (0..graph.n_nodes()).collect()
    } else if a.seed_nodes.is_empty() {
        return Err(DnrError::Usage(
            "give at least one --seed-node, or --all".into(),
        ));
    } else {
        a.seed_nodes
            .iter()
            .map(|s| {
                graph
                    .node_index(s)
                    .ok_or_else(|| DnrError::data(&a.graph.graph, Error::UnknownNode(s.clone())))
            })
            .collect::<Result<_>>()?
    };
    let t = TransitionMatrix::from_graph(&graph);
    let vectors = clock.time("ranking", || {
        pool.install(|| par_ppr_batch(&t, &seeds, &cfg))
    })?;
    warn_unconverged(&graph, vectors.iter().map(|v| (v.seed, v.converged)));
    let mut outputs = vec![a.out.clone()];
    clock.time("write", || -> Result<()> {
        io::write_file(&a.out, |w| io::write_ranks(w, &graph, &vectors, a.format))?;
        if let Some(map) = &a.node_map {
            io::write_file(map, |w| io::write_node_map(w, &graph))?;
            outputs.push(map.clone());
        }
        Ok(())
    })?;
    Ok(Record {
        seed: None,
        inputs: digests(&[&a.graph.graph])?,
        outputs,
    })
}

/// Training nodes: an explicit list, a seeded sample of `candidates`, or all
/// of them.
fn select_train_nodes(
    graph: &Graph,
    candidates: &[usize],
    list: Option<&Path>,
    fraction: Option<f64>,
    seed: u64,
) -> Result<Vec<usize>> {
    if let Some(path) = list {
        return io::load_node_list(path, graph);
    }
    match fraction {
        Some(f) => {
            let mut rng = rng::stream(seed, Stream::Split, 0);
            Ok(split_fraction(candidates, f, &mut rng)?.0)
        }
        None => Ok(candidates.to_vec()),
    }
}

/// Extends `cache` with rank vectors for `nodes` it does not hold yet.
fn fill_cache(
    pool: &ThreadPool,
    t: &TransitionMatrix,
    cache: &mut RankCache,
    nodes: &[usize],
    cfg: &PprConfig,
) -> Result<()> {
    let missing: Vec<usize> = nodes
        .iter()
        .copied()
        .filter(|u| !cache.contains_key(u))
        .collect();
    let extra = pool.install(|| precompute_ranks(t, &missing, cfg))?;
    cache.extend(extra);
    Ok(())
}

fn embed_cmd(a: &EmbedArgs, clock: &mut StageClock) -> Result<Record> {
    let pool = thread_pool(a.threads)?;
    let mode: TrainMode = a.mode.into();
    let cfg = a.train.config(mode, a.ppr.config());
    cfg.validate()?;
    let graph = clock.time("load", || a.graph.load())?;
    let labels = match (&a.labels, mode) {
        (Some(p), _) => Some(io::load_labels(p, &graph)?),
        (None, TrainMode::UnsupervisedEmbed) => None,
        (None, _) => {
            return Err(DnrError::Usage(
                "supervised embedding needs --labels".into(),
            ))
        }
    };
    let candidates = match (&labels, mode) {
        (Some(l), TrainMode::SupervisedEmbed) => l.labeled_nodes(),
        _ => (0..graph.n_nodes()).collect(),
    };
    let train_nodes = select_train_nodes(
        &graph,
        &candidates,
        a.train_nodes.as_deref(),
        a.train_fraction,
        cfg.seed,
    )?;
    let t = TransitionMatrix::from_graph(&graph);
    let (outcome, mut cache) = clock.time("training", || {
        train_pipelined(&graph, &t, labels.as_ref(), &train_nodes, cfg, Some(&pool))
    })?;
    let all: Vec<usize> = (0..graph.n_nodes()).collect();
    clock.time("ranking", || {
        fill_cache(&pool, &t, &mut cache, &all, &cfg.ppr)
    })?;
    let emb = clock.time("embedding", || {
        embed(
            &outcome,
            &mut SharedRanks::new(&t, cfg.ppr, &cache),
            graph.n_nodes(),
            &all,
            &cfg,
        )
    })?;
    let mut outputs = vec![a.out.clone()];
    clock.time("write", || -> Result<()> {
        io::write_file(&a.out, |w| io::write_embeddings(w, &graph, &emb))?;
        if let Some(path) = &a.checkpoint {
            Checkpoint::new(cfg, outcome.model.clone(), outcome.epochs_run()).save(path)?;
            outputs.push(path.clone());
        }
        Ok(())
    })?;
    let mut inputs = vec![a.graph.graph.as_path()];
    inputs.extend(a.labels.as_deref());
    inputs.extend(a.train_nodes.as_deref());
    Ok(Record {
        seed: Some(cfg.seed),
        inputs: digests(&inputs)?,
        outputs,
    })
}

#[derive(Debug, Serialize)]
struct ClassifySummary {
    schema_version: u32,
    train_size: usize,
    predicted_nodes: usize,
    /// Held-out nodes that carry labels and were scored.
    scored_nodes: usize,
    micro_f1: Option<f64>,
    macro_f1: Option<f64>,
    epochs_run: usize,
    stop_reason: dnr_core::dnr::StopReason,
    epoch_losses: Vec<f64>,
    config: TrainConfig,
}

fn classify_cmd(a: &ClassifyArgs, clock: &mut StageClock) -> Result<Record> {
    let pool = thread_pool(a.threads)?;
    let cfg = a.train.config(TrainMode::EndToEnd, a.ppr.config());
    cfg.validate()?;
    let graph = clock.time("load", || a.graph.load())?;
    let labels = io::load_labels(&a.labels, &graph)?;
    let fraction = match (&a.train_nodes, a.train_fraction) {
        (None, None) => Some(0.5),
        (_, f) => f,
    };
    let train_nodes = select_train_nodes(
        &graph,
        &labels.labeled_nodes(),
        a.train_nodes.as_deref(),
        fraction,
        cfg.seed,
    )?;
    let t = TransitionMatrix::from_graph(&graph);
    let (outcome, mut cache) = clock.time("training", || {
        train_pipelined(&graph, &t, Some(&labels), &train_nodes, cfg, Some(&pool))
    })?;
    let in_train: BTreeSet<usize> = train_nodes.iter().copied().collect();
    let held_out: Vec<usize> = (0..graph.n_nodes())
        .filter(|u| !in_train.contains(u))
        .collect();
    clock.time("ranking", || {
        fill_cache(&pool, &t, &mut cache, &held_out, &cfg.ppr)
    })?;
    let probs = clock.time("prediction", || {
        classify_e2e(
            &outcome,
            &mut SharedRanks::new(&t, cfg.ppr, &cache),
            graph.n_nodes(),
            &held_out,
            &cfg,
        )
    })?;

    let scored: Vec<usize> = (0..held_out.len())
        .filter(|&r| labels.is_labeled(held_out[r]))
        .collect();
    let (micro, macro_) = if scored.is_empty() {
        (None, None)
    } else {
        let mut sub = dnr_core::Matrix::zeros(scored.len(), probs.cols());
        for (k, &r) in scored.iter().enumerate() {
            sub.row_mut(k).copy_from_slice(probs.row(r));
        }
        let nodes: Vec<usize> = scored.iter().map(|&r| held_out[r]).collect();
        let counts: Vec<usize> = nodes.iter().map(|&u| labels.label_count(u)).collect();
        let f1 = micro_macro_f1(&predict_topk(&sub, &counts)?, &labels.select_rows(&nodes))?;
        (Some(f1.micro), Some(f1.macro_))
    };
    let summary = ClassifySummary {
        schema_version: 1,
        train_size: train_nodes.len(),
        predicted_nodes: held_out.len(),
        scored_nodes: scored.len(),
        micro_f1: micro,
        macro_f1: macro_,
        epochs_run: outcome.epochs_run(),
        stop_reason: outcome.stop_reason,
        epoch_losses: outcome.epoch_losses.clone(),
        config: cfg,
    };
    let summary_out = summary_path(a);
    let mut outputs = vec![a.out.clone(), summary_out.clone()];
    clock.time("write", || -> Result<()> {
        io::write_file(&a.out, |w| {
            io::write_predictions(w, &graph, labels.class_names(), &held_out, &probs)
        })?;
        io::write_json(&summary_out, &summary)?;
        if let Some(path) = &a.checkpoint {
            Checkpoint::new(cfg, outcome.model.clone(), outcome.epochs_run()).save(path)?;
            outputs.push(path.clone());
        }
        Ok(())
    })?;
    let mut inputs = vec![a.graph.graph.as_path(), a.labels.as_path()];
    inputs.extend(a.train_nodes.as_deref());
    Ok(Record {
        seed: Some(cfg.seed),
        inputs: digests(&inputs)?,
        outputs,
    })
}

fn evaluate_cmd(a: &EvaluateArgs, clock: &mut StageClock) -> Result<Record> {
    if a.threads == Some(0) {
        return Err(Error::InvalidParameter("--threads must be at least 1".into()).into());
    }
    let graph = clock.time("load", || a.graph.load())?;
    let labels: LabelMatrix = io::load_labels(&a.labels, &graph)?;
    let ppr = a.ppr.config();
    let pipeline = match a.pipeline {
        PipelineArg::DnrEmbed => Pipeline::DnrEmbed(a.train.config(a.mode.into(), ppr)),
        PipelineArg::DnrE2e => Pipeline::DnrEndToEnd(a.train.config(TrainMode::EndToEnd, ppr)),
        PipelineArg::EmbeddingFile => {
            let path = a.embeddings.as_ref().ok_or_else(|| {
                DnrError::Usage("the embedding-file pipeline needs --embeddings".into())
            })?;
            Pipeline::EmbeddingFile {
                source: path.display().to_string(),
                embeddings: io::load_embeddings(path, &graph)?,
            }
        }
    };
    let protocol = EvalProtocol {
        construction_fraction: a.construction_fraction,
        train_fractions: a.fractions.clone(),
        repeats: a.repeats,
        l2_lambda: a.lambda,
        seed: a.train.seed,
    };
    let mut report = clock.time("evaluation", || {
        run_protocol(&graph, &labels, &pipeline, &protocol, a.threads)
    })?;
    if a.omit_timing {
        report = report.without_timing();
    }
    let mut outputs = vec![a.out.clone()];
    clock.time("write", || -> Result<()> {
        io::write_json(&a.out, &report)?;
        if let Some(csv) = &a.csv {
            report.save_csv(csv)?;
            outputs.push(csv.clone());
        }
        Ok(())
    })?;
    let mut inputs = vec![a.graph.graph.as_path(), a.labels.as_path()];
    inputs.extend(a.embeddings.as_deref());
    Ok(Record {
        seed: Some(protocol.seed),
        inputs: digests(&inputs)?,
        outputs,
    })
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    manifest.verify_inputs()?;
    let mut command = manifest.command;
    if matches!(command, Command::Replay(_)) {
        return Err(DnrError::Replay("a manifest cannot record a replay".into()));
    }
    if let Some(dir) = &a.out_dir {
        command.redirect_outputs(dir);
    }
    execute(&command)
}

/// Runs one command and writes its manifest next to the primary output.
pub fn execute(command: &Command) -> Result<()> {
    let mut clock = StageClock::new();
    let record = match command {
        Command::Replay(a) => return replay(a),
        Command::Rank(a) => rank(a, &mut clock)?,
        Command::Embed(a) => embed_cmd(a, &mut clock)?,
        Command::Classify(a) => classify_cmd(a, &mut clock)?,
        Command::Evaluate(a) => evaluate_cmd(a, &mut clock)?,
    };
    let primary = command
        .output()
        .expect("non-replay commands have an output");
    let manifest = clock.finish(command.clone(), record.seed, record.inputs, record.outputs);
    manifest.save(&RunManifest::path_for(primary))
}

fn report_error(kind: ExitKind, message: &str) {
    let line = message.lines().next().unwrap_or_default();
    eprintln!("dnr: error kind={kind} exit={}: {line}", kind.code());
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let rendered = e.to_string();
            let message = rendered.trim_start_matches("error: ");
            report_error(ExitKind::Usage, message);
            eprint!("{rendered}");
            return ExitKind::Usage.code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let kind = e.kind();
            report_error(kind, &e.to_string());
            kind.code()
        }
    }
}
