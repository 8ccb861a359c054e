//! Node-classification evaluation: train-fraction sweeps with repeats,
//! scored by micro and macro F1 under the top-k decision rule.
//!
//! Every split and every model seed is drawn from a named stream of the
//! protocol seed, so a report depends only on its inputs. Independent
//! (fraction, repeat) cells run in parallel and are assembled in a fixed
//! order.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use dnr_core::dnr::{classify_e2e, embed, train_with_source, RankCache, TrainConfig, TrainMode};
use dnr_core::eval::{micro_macro_f1, predict_topk, split_fraction, train_logreg, LogRegOptions};
use dnr_core::rng::{self, Stream};
use dnr_core::{defaults, Error, Graph, LabelMatrix, Matrix, TransitionMatrix};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{format_float, write_file};
use crate::parallel::{precompute_ranks, SharedRanks};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    /// Share of labeled nodes reserved for training the embedding. These
    /// nodes never enter a classifier split.
    pub construction_fraction: f64,
    pub train_fractions: Vec<f64>,
    pub repeats: usize,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            construction_fraction: defaults::CONSTRUCTION_FRACTION,
            train_fractions: defaults::TRAIN_FRACTIONS.to_vec(),
            repeats: defaults::REPEATS,
            l2_lambda: defaults::L2_LAMBDA,
            seed: 0,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> dnr_core::Result<()> {
        let in_unit = |f: f64| f > 0.0 && f < 1.0;
        if !in_unit(self.construction_fraction) {
            return Err(Error::InvalidParameter(format!(
                "construction fraction {} outside (0, 1)",
                self.construction_fraction
            )));
        }
        if self.train_fractions.is_empty() {
            return Err(Error::InvalidParameter("no train fractions".into()));
        }
        if let Some(f) = self.train_fractions.iter().find(|&&f| !in_unit(f)) {
            return Err(Error::InvalidParameter(format!(
                "train fraction {f} outside (0, 1)"
            )));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidParameter("repeats must be >= 1".into()));
        }
        if self.l2_lambda.is_nan() || self.l2_lambda < 0.0 {
            return Err(Error::InvalidParameter("l2 lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// What produces the scores being evaluated.
#[derive(Debug, Clone)]
pub enum Pipeline {
    /// Train embeddings with a supervised or unsupervised configuration and
    /// score them with logistic regression.
    DnrEmbed(TrainConfig),
    /// Train the network end to end and use its outputs as class scores.
    DnrEndToEnd(TrainConfig),
    /// Score precomputed embeddings (one row per graph node).
    EmbeddingFile { source: String, embeddings: Matrix },
}

/// Serializable description of a [`Pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PipelineEcho {
    DnrEmbed { train: TrainConfig },
    DnrE2e { train: TrainConfig },
    EmbeddingFile { source: String, dim: usize },
}

impl Pipeline {
    pub fn echo(&self) -> PipelineEcho {
        match self {
            Pipeline::DnrEmbed(cfg) => PipelineEcho::DnrEmbed { train: *cfg },
            Pipeline::DnrEndToEnd(cfg) => PipelineEcho::DnrE2e { train: *cfg },
            Pipeline::EmbeddingFile { source, embeddings } => PipelineEcho::EmbeddingFile {
                source: source.clone(),
                dim: embeddings.cols(),
            },
        }
    }

    /// Whether a share of labeled nodes is set aside before the sweep.
    fn reserves_construction(&self) -> bool {
        match self {
            Pipeline::DnrEmbed(cfg) => cfg.mode == TrainMode::SupervisedEmbed,
            Pipeline::DnrEndToEnd(_) => true,
            Pipeline::EmbeddingFile { .. } => false,
        }
    }

    fn train_config(&self) -> Option<&TrainConfig> {
        match self {
            Pipeline::DnrEmbed(cfg) | Pipeline::DnrEndToEnd(cfg) => Some(cfg),
            Pipeline::EmbeddingFile { .. } => None,
        }
    }

    fn validate(&self, graph: &Graph) -> dnr_core::Result<()> {
        match self {
            Pipeline::DnrEmbed(cfg) if cfg.mode == TrainMode::EndToEnd => {
                Err(Error::InvalidParameter(
                    "embedding pipeline needs a supervised or unsupervised mode".into(),
                ))
            }
            Pipeline::DnrEndToEnd(cfg) if cfg.mode != TrainMode::EndToEnd => Err(
                Error::InvalidParameter("end-to-end pipeline needs the end-to-end mode".into()),
            ),
            Pipeline::DnrEmbed(cfg) | Pipeline::DnrEndToEnd(cfg) => cfg.validate(),
            Pipeline::EmbeddingFile { embeddings, .. } if embeddings.rows() != graph.n_nodes() => {
                Err(Error::DimensionMismatch {
                    expected: graph.n_nodes(),
                    actual: embeddings.rows(),
                })
            }
            Pipeline::EmbeddingFile { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowTiming {
    /// Embedding training for this repeat, shared by its fractions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_s: Option<f64>,
    pub training_s: f64,
    pub evaluation_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub fraction: f64,
    pub repeat: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Epochs the network ran for this row's model, when one was trained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<RowTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub fraction: f64,
    pub runs: usize,
    pub micro_mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub micro_std: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub directed: bool,
    pub n_classes: usize,
    pub n_labeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub pipeline: PipelineEcho,
    pub protocol: EvalProtocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTiming {
    pub ranking_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub config: ReportConfig,
    pub dataset: DatasetSummary,
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<Aggregate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<ReportTiming>,
}

impl EvalReport {
    /// Drops every wall-clock measurement, leaving only values that are a
    /// function of the inputs.
    pub fn without_timing(mut self) -> Self {
        self.timing = None;
        for row in &mut self.rows {
            row.timing = None;
        }
        self
    }

    pub fn aggregate(&self, fraction: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.fraction == fraction)
    }

    /// Result rows as CSV, one line per (fraction, repeat).
    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(
            w,
            "fraction,repeat,train_size,test_size,micro_f1,macro_f1,embedding_s,training_s,evaluation_s"
        )?;
        for r in &self.rows {
            let (embed_s, train_s, eval_s) = match &r.timing {
                Some(t) => (
                    t.embedding_s.map(format_float).unwrap_or_default(),
                    format_float(t.training_s),
                    format_float(t.evaluation_s),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.fraction,
                r.repeat,
                r.train_size,
                r.test_size,
                format_float(r.micro_f1),
                format_float(r.macro_f1),
                embed_s,
                train_s,
                eval_s
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_file(path, |w| self.write_csv(w))
    }
}

fn split_index(repeat: usize, cell: usize) -> u64 {
    ((repeat as u64) << 32) | cell as u64
}

/// Model seed for a training run, drawn from its own stream so that seeds of
/// different repeats and cells are unrelated.
fn model_seed(seed: u64, index: u64) -> u64 {
    rng::stream(seed, Stream::Init, index).next_u64()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Top-k predictions for `test` scored against the truth.
fn score(probs: &Matrix, labels: &LabelMatrix, test: &[usize]) -> dnr_core::Result<(f64, f64)> {
    let counts: Vec<usize> = test.iter().map(|&u| labels.label_count(u)).collect();
    let predicted = predict_topk(probs, &counts)?;
    let f1 = micro_macro_f1(&predicted, &labels.select_rows(test))?;
    Ok((f1.micro, f1.macro_))
}

struct Context<'a> {
    graph: &'a Graph,
    labels: &'a LabelMatrix,
    transition: &'a TransitionMatrix,
    ranks: &'a RankCache,
    protocol: &'a EvalProtocol,
}

struct RepeatSplit {
    construction: Vec<usize>,
    evaluation: Vec<usize>,
}

impl Context<'_> {
    fn repeat_split(&self, pipeline: &Pipeline, repeat: usize) -> dnr_core::Result<RepeatSplit> {
        let labeled = self.labels.labeled_nodes();
        if !pipeline.reserves_construction() {
            return Ok(RepeatSplit {
                construction: Vec::new(),
                evaluation: labeled,
            });
        }
        let mut rng = rng::stream(self.protocol.seed, Stream::Split, split_index(repeat, 0));
        let (construction, evaluation) =
            split_fraction(&labeled, self.protocol.construction_fraction, &mut rng)?;
        Ok(RepeatSplit {
            construction,
            evaluation,
        })
    }

    fn cell_split(
        &self,
        evaluation: &[usize],
        repeat: usize,
        fi: usize,
    ) -> dnr_core::Result<(Vec<usize>, Vec<usize>)> {
        let mut rng = rng::stream(
            self.protocol.seed,
            Stream::Split,
            split_index(repeat, fi + 1),
        );
        split_fraction(evaluation, self.protocol.train_fractions[fi], &mut rng)
    }

    fn embed_repeat(
        &self,
        cfg: &TrainConfig,
        split: &RepeatSplit,
        repeat: usize,
    ) -> dnr_core::Result<(Matrix, usize)> {
        let mut cfg = *cfg;
        cfg.seed = model_seed(self.protocol.seed, split_index(repeat, 0));
        let (train_nodes, labels) = match cfg.mode {
            TrainMode::UnsupervisedEmbed => ((0..self.graph.n_nodes()).collect(), None),
            _ => (split.construction.clone(), Some(self.labels)),
        };
        let mut source = SharedRanks::new(self.transition, cfg.ppr, self.ranks);
        let outcome = train_with_source(self.graph, labels, &train_nodes, cfg, &mut source)?;
        let all: Vec<usize> = (0..self.graph.n_nodes()).collect();
        let emb = embed(&outcome, &mut source, self.graph.n_nodes(), &all, &cfg)?;
        Ok((emb.values, outcome.epochs_run()))
    }

    fn logreg_cell(
        &self,
        features: &Matrix,
        train: &[usize],
        test: &[usize],
    ) -> dnr_core::Result<(f64, f64, f64)> {
        let opts = LogRegOptions {
            lambda: self.protocol.l2_lambda,
            ..LogRegOptions::default()
        };
        let start = Instant::now();
        let clf = train_logreg(features, self.labels, train, &opts)?;
        let training_s = start.elapsed().as_secs_f64();
        let probs = clf.predict_proba(features, test)?;
        let (micro, macro_) = score(&probs, self.labels, test)?;
        Ok((micro, macro_, training_s))
    }

    fn e2e_cell(
        &self,
        cfg: &TrainConfig,
        train: &[usize],
        test: &[usize],
        index: u64,
    ) -> dnr_core::Result<(f64, f64, usize, f64)> {
        let mut cfg = *cfg;
        cfg.seed = model_seed(self.protocol.seed, index);
        let start = Instant::now();
        let mut source = SharedRanks::new(self.transition, cfg.ppr, self.ranks);
        let outcome = train_with_source(self.graph, Some(self.labels), train, cfg, &mut source)?;
        let training_s = start.elapsed().as_secs_f64();
        let probs = classify_e2e(&outcome, &mut source, self.graph.n_nodes(), test, &cfg)?;
        let (micro, macro_) = score(&probs, self.labels, test)?;
        Ok((micro, macro_, outcome.epochs_run(), training_s))
    }

    fn run_repeat(&self, pipeline: &Pipeline, repeat: usize) -> dnr_core::Result<Vec<EvalRow>> {
        let split = self.repeat_split(pipeline, repeat)?;
        let (features, epochs, embedding_s) = match pipeline {
            Pipeline::DnrEmbed(cfg) => {
                let start = Instant::now();
                let (m, epochs) = self.embed_repeat(cfg, &split, repeat)?;
                (Some(m), Some(epochs), Some(start.elapsed().as_secs_f64()))
            }
            Pipeline::EmbeddingFile { embeddings, .. } => (Some(embeddings.clone()), None, None),
            Pipeline::DnrEndToEnd(_) => (None, None, None),
        };
        (0..self.protocol.train_fractions.len())
            .into_par_iter()
            .map(|fi| {
                let (train, test) = self.cell_split(&split.evaluation, repeat, fi)?;
                let start = Instant::now();
                let (micro, macro_, epochs_run, training_s) = match (&features, pipeline) {
                    (Some(f), _) => {
                        let (mi, ma, t) = self.logreg_cell(f, &train, &test)?;
                        (mi, ma, epochs, t)
                    }
                    (None, Pipeline::DnrEndToEnd(cfg)) => {
                        let (mi, ma, ep, t) =
                            self.e2e_cell(cfg, &train, &test, split_index(repeat, fi + 1))?;
                        (mi, ma, Some(ep), t)
                    }
                    (None, _) => unreachable!("embedding pipelines always produce features"),
                };
                let total = start.elapsed().as_secs_f64();
                Ok(EvalRow {
                    fraction: self.protocol.train_fractions[fi],
                    repeat,
                    train_size: train.len(),
                    test_size: test.len(),
                    micro_f1: micro,
                    macro_f1: macro_,
                    epochs_run,
                    timing: Some(RowTiming {
                        embedding_s,
                        training_s,
                        evaluation_s: total - training_s,
                    }),
                })
            })
            .collect()
    }
}

/// Runs the full sweep: for every repeat, a fresh construction split (when
/// the pipeline consumes labels) and, for every train fraction, a fresh
/// classifier split of the remaining labeled nodes.
///
/// Rank vectors of all nodes are computed once up front. With `threads` set,
/// the run uses a dedicated pool of that size.
pub fn run_protocol(
    graph: &Graph,
    labels: &LabelMatrix,
    pipeline: &Pipeline,
    protocol: &EvalProtocol,
    threads: Option<usize>,
) -> Result<EvalReport> {
    protocol.validate()?;
    pipeline.validate(graph)?;
    if labels.n_nodes() != graph.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: graph.n_nodes(),
            actual: labels.n_nodes(),
        }
        .into());
    }
    let run = || -> Result<EvalReport> {
        let start = Instant::now();
        let transition = TransitionMatrix::from_graph(graph);
        let ranks = match pipeline.train_config() {
            Some(cfg) => {
                let all: Vec<usize> = (0..graph.n_nodes()).collect();
                precompute_ranks(&transition, &all, &cfg.ppr)?
            }
            None => RankCache::new(),
        };
        let ranking_s = start.elapsed().as_secs_f64();
        let ctx = Context {
            graph,
            labels,
            transition: &transition,
            ranks: &ranks,
            protocol,
        };
        let per_repeat: Vec<Vec<EvalRow>> = (0..protocol.repeats)
            .into_par_iter()
            .map(|r| ctx.run_repeat(pipeline, r))
            .collect::<dnr_core::Result<_>>()?;
        let mut rows: Vec<EvalRow> = per_repeat.into_iter().flatten().collect();
        let fraction_pos = |f: f64| protocol.train_fractions.iter().position(|&x| x == f);
        rows.sort_by_key(|r| (fraction_pos(r.fraction), r.repeat));

        let aggregates = protocol
            .train_fractions
            .iter()
            .map(|&f| {
                let micro: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.fraction == f)
                    .map(|r| r.micro_f1)
                    .collect();
                let macro_: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.fraction == f)
                    .map(|r| r.macro_f1)
                    .collect();
                let (micro_mean, micro_std) = mean_std(&micro);
                let (macro_mean, macro_std) = mean_std(&macro_);
                Aggregate {
                    fraction: f,
                    runs: micro.len(),
                    micro_mean,
                    micro_std,
                    macro_mean,
                    macro_std,
                }
            })
            .collect();
        Ok(EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config: ReportConfig {
                pipeline: pipeline.echo(),
                protocol: protocol.clone(),
            },
            dataset: DatasetSummary {
                n_nodes: graph.n_nodes(),
                n_edges: graph.n_edges(),
                directed: graph.is_directed(),
                n_classes: labels.n_classes(),
                n_labeled: labels.labeled_nodes().len(),
            },
            rows,
            aggregates,
            timing: Some(ReportTiming {
                ranking_s,
                total_s: start.elapsed().as_secs_f64(),
            }),
        })
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dnr_core::dnr::Architecture;
    use dnr_core::generators::planted_partition;

    fn small_protocol() -> EvalProtocol {
        EvalProtocol {
            train_fractions: vec![0.3, 0.6],
            repeats: 2,
            seed: 4,
            ..EvalProtocol::default()
        }
    }

    fn small_cfg(mode: TrainMode) -> TrainConfig {
        let mut cfg = TrainConfig::new(mode, Architecture::Plain);
        cfg.embed_dim = 8;
        cfg.max_epochs = 3;
        cfg
    }

    #[test]
    fn report_has_one_row_per_cell_and_bounded_scores() {
        let (g, labels) = planted_partition(2, 20, 0.3, 0.05, 1).unwrap();
        let p = small_protocol();
        for pipeline in [
            Pipeline::DnrEmbed(small_cfg(TrainMode::SupervisedEmbed)),
            Pipeline::DnrEmbed(small_cfg(TrainMode::UnsupervisedEmbed)),
            Pipeline::DnrEndToEnd(small_cfg(TrainMode::EndToEnd)),
        ] {
            let report = run_protocol(&g, &labels, &pipeline, &p, Some(2)).unwrap();
            assert_eq!(report.rows.len(), 4);
            assert_eq!(report.aggregates.len(), 2);
            for r in &report.rows {
                assert!((0.0..=1.0).contains(&r.micro_f1) && (0.0..=1.0).contains(&r.macro_f1));
            }
            let order: Vec<(f64, usize)> =
                report.rows.iter().map(|r| (r.fraction, r.repeat)).collect();
            assert_eq!(order, vec![(0.3, 0), (0.3, 1), (0.6, 0), (0.6, 1)]);
        }
    }

    #[test]
    fn construction_nodes_stay_out_of_classifier_splits() {
        let (g, labels) = planted_partition(2, 20, 0.3, 0.05, 1).unwrap();
        let transition = TransitionMatrix::from_graph(&g);
        let ranks = RankCache::new();
        let p = small_protocol();
        let ctx = Context {
            graph: &g,
            labels: &labels,
            transition: &transition,
            ranks: &ranks,
            protocol: &p,
        };
        let pipeline = Pipeline::DnrEmbed(small_cfg(TrainMode::SupervisedEmbed));
        for r in 0..p.repeats {
            let split = ctx.repeat_split(&pipeline, r).unwrap();
            assert_eq!(split.construction.len(), 8);
            for fi in 0..p.train_fractions.len() {
                let (train, test) = ctx.cell_split(&split.evaluation, r, fi).unwrap();
                let mut union: Vec<usize> = train.iter().chain(&test).copied().collect();
                union.sort_unstable();
                let mut eval = split.evaluation.clone();
                eval.sort_unstable();
                assert_eq!(union, eval);
                assert!(train.iter().all(|u| !test.contains(u)));
                assert!(union.iter().all(|u| !split.construction.contains(u)));
            }
        }
    }

    #[test]
    fn report_is_a_function_of_its_inputs() {
        let (g, labels) = planted_partition(2, 15, 0.4, 0.05, 8).unwrap();
        let p = EvalProtocol {
            repeats: 1,
            ..small_protocol()
        };
        let pipeline = Pipeline::DnrEndToEnd(small_cfg(TrainMode::EndToEnd));
        let a = run_protocol(&g, &labels, &pipeline, &p, Some(1))
            .unwrap()
            .without_timing();
        let b = run_protocol(&g, &labels, &pipeline, &p, Some(3))
            .unwrap()
            .without_timing();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn invalid_protocols_are_rejected() {
        let (g, labels) = planted_partition(2, 5, 0.5, 0.1, 1).unwrap();
        let pipeline = Pipeline::DnrEndToEnd(small_cfg(TrainMode::EndToEnd));
        let bad = EvalProtocol {
            train_fractions: vec![1.0],
            ..EvalProtocol::default()
        };
        assert!(run_protocol(&g, &labels, &pipeline, &bad, None).is_err());
        let tiny = EvalProtocol {
            train_fractions: vec![0.01],
            ..EvalProtocol::default()
        };
        assert!(run_protocol(&g, &labels, &pipeline, &tiny, None).is_err());
        let wrong_mode = Pipeline::DnrEmbed(small_cfg(TrainMode::EndToEnd));
        assert!(run_protocol(&g, &labels, &wrong_mode, &EvalProtocol::default(), None).is_err());
    }

    #[test]
    fn sample_standard_deviation() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
