//! Experiment drivers: configuration, arms, metrics and result files.
//!
//! Every arm of an experiment sees the same test problems. Trials run in
//! parallel, each with seeds derived from `(seed, stream, index)`, and rows
//! are emitted in (arm, problem, iteration, metric) order.

pub mod check;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cmp::{self, derive_seed, Attachment, CmpError, TrainSource, TrainingData, TrainingExample};
use crate::engine::{check_schedule_log, make_schedule, run_inference, EngineConfig, InferenceTrace, LogEntry, NoConsensus};
use crate::expfam::Message;
use crate::forest::{Forest, ForestConfig};
use crate::graph::FactorGraph;
use crate::models::{Model, ModelError, ModelSpec, Sample};

pub use output::{read_samples, write_metrics_csv, write_samples, write_trace_csv, TraceRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cmp(#[from] CmpError),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Whether the error is the caller's fault rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Model(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "MP")]
    Mp,
    /// All predictor stages.
    #[serde(rename = "CMP")]
    Cmp,
    #[serde(rename = "CMP-1stage")]
    Cmp1Stage,
    #[serde(rename = "CMP-2stage")]
    Cmp2Stage,
    /// Forest predictions only, held for every iteration.
    #[serde(rename = "ForestOnly")]
    ForestOnly,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::Mp, Arm::Cmp, Arm::Cmp1Stage, Arm::Cmp2Stage, Arm::ForestOnly];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Mp => "MP",
            Arm::Cmp => "CMP",
            Arm::Cmp1Stage => "CMP-1stage",
            Arm::Cmp2Stage => "CMP-2stage",
            Arm::ForestOnly => "ForestOnly",
        }
    }

    pub fn needs_predictors(self) -> bool {
        self != Arm::Mp
    }

    /// Highest predictor stage that sends messages.
    fn max_stage(self) -> usize {
        match self {
            Arm::Mp => 0,
            Arm::Cmp1Stage => 1,
            _ => usize::MAX,
        }
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Arm::ALL.iter().map(|a| a.name()).collect();
                format!("unknown arm {s:?}; expected one of {}", names.join(", "))
            })
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_long() -> usize {
    100
}

fn default_trials() -> usize {
    50
}

fn default_iterations() -> usize {
    50
}

fn default_problems() -> usize {
    500
}

fn default_arms() -> Vec<Arm> {
    vec![Arm::Mp, Arm::Cmp]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub train_source: TrainSource,
    /// Training problems (D).
    #[serde(default = "default_problems")]
    pub training_problems: usize,
    /// Length of the standard runs that produce convergence oracles.
    #[serde(default = "default_long")]
    pub long_iterations: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Defaults to the model's own engine settings.
    #[serde(default)]
    pub engine: Option<EngineConfig>,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default = "default_arms")]
    pub arms: Vec<Arm>,
    #[serde(default)]
    pub seed: u64,
    /// JSON-lines samples whose latents serve as labels.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Directory of trained forests (`<predictor>.json`) to use instead of training.
    #[serde(default)]
    pub forests: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, train_source: TrainSource) -> Self {
        ExperimentConfig {
            model,
            train_source,
            training_problems: default_problems(),
            long_iterations: default_long(),
            trials: default_trials(),
            iterations: default_iterations(),
            engine: None,
            forest: ForestConfig::default(),
            arms: default_arms(),
            seed: 0,
            labels: None,
            forests: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<Model, HarnessError> {
        let model = Model::from_spec(&self.model)?;
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.arms.is_empty() {
            return bad("at least one arm is required".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        self.forest.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.engine(&model)
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let trains = self.arms.iter().any(|a| a.needs_predictors()) && self.forests.is_none();
        if trains {
            if model.predictors(&model.build_graph()).is_empty() {
                return bad(format!("model {:?} has no predictors", model.kind()));
            }
            match self.train_source {
                TrainSource::Labels if self.labels.is_none() => {
                    return bad("trainSource labels needs a labels file".into());
                }
                TrainSource::Convergence if self.long_iterations == 0 => {
                    return bad("longIterations must be positive".into());
                }
                _ => {}
            }
            if self.train_source != TrainSource::Labels && self.training_problems < 2 * self.forest.min_leaf {
                return bad(format!(
                    "trainingProblems {} is below twice the minimum leaf size {}",
                    self.training_problems, self.forest.min_leaf
                ));
            }
        }
        Ok(model)
    }

    /// Engine settings with the experiment's iteration count.
    pub fn engine(&self, model: &Model) -> EngineConfig {
        let mut e = self.engine.clone().unwrap_or_else(|| model.default_engine());
        e.iterations = self.iterations;
        e
    }

    pub fn test_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, "test", trial as u64)
    }

    pub fn training_seed(&self, problem: usize) -> u64 {
        derive_seed(self.seed, "train", problem as u64)
    }

    pub fn test_problems(&self, model: &Model) -> Result<Vec<Sample>, HarnessError> {
        (0..self.trials)
            .map(|t| Ok(model.sample(self.test_seed(t))?))
            .collect()
    }
}

/// SHA-256 of the test observations, hex encoded.
pub fn dataset_hash(samples: &[Sample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(serde_json::to_vec(&s.observations).expect("observations serialize"));
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Trained predictors plus what went into them.
#[derive(Clone, Debug)]
pub struct Trained {
    pub attachments: Vec<Attachment>,
    /// Examples per attachment, concatenated over stages.
    pub examples: Vec<Vec<TrainingExample>>,
    pub discarded: usize,
    pub seconds: f64,
}

impl Trained {
    pub fn forests(&self) -> Vec<(&str, &Forest)> {
        self.attachments
            .iter()
            .filter_map(|a| a.forest.as_ref().map(|f| (a.def.name.as_str(), f)))
            .collect()
    }
}

/// Trains every predictor of the model from the configured source.
pub fn train(cfg: &ExperimentConfig, model: &Model, graph: &FactorGraph) -> Result<Trained, HarnessError> {
    let start = Instant::now();
    let mut attachments: Vec<Attachment> = model.predictors(graph).into_iter().map(Attachment::new).collect();
    let engine = cfg.engine(model);
    let problems: Vec<Sample> = match cfg.train_source {
        TrainSource::Labels => {
            let path = cfg
                .labels
                .as_ref()
                .ok_or_else(|| HarnessError::Config("labels file missing".into()))?;
            read_samples(std::io::BufReader::new(std::fs::File::open(path)?))?
        }
        _ => (0..cfg.training_problems)
            .map(|d| Ok(model.sample(cfg.training_seed(d))?))
            .collect::<Result<_, HarnessError>>()?,
    };
    let data = match cfg.train_source {
        TrainSource::Convergence => TrainingData::Convergence {
            problems: &problems,
            long_iterations: cfg.long_iterations,
        },
        _ => TrainingData::Labelled(&problems),
    };
    let forest_cfg = ForestConfig {
        seed: derive_seed(cfg.seed, "forest", 0),
        ..cfg.forest.clone()
    };
    let sets = cmp::train_all(graph, &engine, &mut attachments, &data, &forest_cfg)?;
    let mut examples = vec![Vec::new(); attachments.len()];
    let mut discarded = 0;
    for set in sets {
        discarded += set.discarded;
        for (i, ex) in set.examples.into_iter().enumerate() {
            examples[i].extend(ex);
        }
    }
    Ok(Trained {
        attachments,
        examples,
        discarded,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Loads `<dir>/<predictor>.json` for every predictor of the model.
pub fn load_forests(dir: &std::path::Path, model: &Model, graph: &FactorGraph) -> Result<Trained, HarnessError> {
    let mut attachments = Vec::new();
    for def in model.predictors(graph) {
        let path = dir.join(format!("{}.json", def.name));
        let text = std::fs::read_to_string(&path)?;
        let forest = Forest::from_json(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if forest.output_family != graph.variables[def.targets[0]].family {
            return Err(HarnessError::Config(format!("{}: wrong output family", path.display())));
        }
        attachments.push(Attachment {
            def,
            forest: Some(forest),
        });
    }
    let n = attachments.len();
    Ok(Trained {
        attachments,
        examples: vec![Vec::new(); n],
        discarded: 0,
        seconds: 0.0,
    })
}

/// Result of one arm on one problem.
#[derive(Clone, Debug)]
pub struct ArmRun {
    /// Metric values per iteration, 1-based iterations at index `k - 1`.
    pub metrics: Vec<Vec<(&'static str, f64)>>,
    pub trace: InferenceTrace,
    /// Forest predictions per target, for arms that ran predictors.
    pub predictions: BTreeMap<usize, Message>,
}

/// Runs one arm on one conditioned problem.
pub fn run_arm(
    arm: Arm,
    model: &Model,
    graph: &FactorGraph,
    engine: &EngineConfig,
    attachments: &[Attachment],
    sample: &Sample,
) -> Result<ArmRun, HarnessError> {
    let g = graph
        .condition(&sample.observation_messages())
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let tracked = model.tracked(graph);
    let runtime = |e: CmpError| HarnessError::Runtime(e.to_string());
    let (trace, predictions) = match arm {
        Arm::Mp => {
            let schedule = make_schedule(&g, &[]).map_err(|e| HarnessError::Runtime(e.to_string()))?;
            let trace = run_inference(&g, engine, &schedule, &tracked, &mut NoConsensus)
                .map_err(|e| HarnessError::Runtime(e.to_string()))?;
            (trace, Vec::new())
        }
        Arm::ForestOnly => {
            let one = EngineConfig {
                iterations: 1,
                convergence_tol: None,
                ..engine.clone()
            };
            let enabled = attachments.iter().map(|a| a.forest.is_some()).collect();
            let (trace, _, preds) = cmp::run_with(&g, &one, attachments, enabled, true, &tracked).map_err(runtime)?;
            (trace, preds)
        }
        _ => {
            let enabled = attachments
                .iter()
                .map(|a| a.forest.is_some() && a.def.stage <= arm.max_stage())
                .collect();
            let (trace, _, preds) = cmp::run_with(&g, engine, attachments, enabled, false, &tracked).map_err(runtime)?;
            (trace, preds)
        }
    };
    let predictions: BTreeMap<usize, Message> = predictions.into_iter().flatten().flatten().collect();
    let position: BTreeMap<usize, usize> = tracked.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let last = trace.iterations.len() - 1;
    let mut metrics = Vec::with_capacity(engine.iterations);
    for it in 1..=engine.iterations {
        let record = &trace.iterations[it.min(last)];
        let belief = |v: usize| -> Option<Message> {
            if arm == Arm::ForestOnly {
                if let Some(m) = predictions.get(&v) {
                    return Some(m.clone());
                }
            }
            position.get(&v).map(|&k| record.beliefs[k].clone())
        };
        metrics.push(model.metrics(graph, &belief, sample)?);
    }
    Ok(ArmRun {
        metrics,
        trace,
        predictions,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub arm: String,
    pub problem_id: usize,
    pub iteration: usize,
    pub metric: String,
    pub value: f64,
}

/// Mean and standard error per iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub model: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub trials: usize,
    pub iterations: usize,
    /// arm → metric → curve over iterations 1..=iterations.
    pub arms: BTreeMap<String, BTreeMap<String, Curve>>,
    /// Problems whose run failed, per arm; they are excluded from the curves.
    pub failures: BTreeMap<String, usize>,
    pub schedule_violations: usize,
    pub consensus_failures: usize,
    pub training_examples: BTreeMap<String, usize>,
    pub training_discarded: usize,
    pub training_seconds: f64,
    pub seconds: f64,
}

impl Summary {
    pub fn curve(&self, arm: Arm, metric: &str) -> Option<&Curve> {
        self.arms.get(arm.name())?.get(metric)
    }

    /// Mean at a 1-based iteration.
    pub fn mean_at(&self, arm: Arm, metric: &str, iteration: usize) -> Option<f64> {
        self.curve(arm, metric)?.mean.get(iteration.checked_sub(1)?).copied()
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub rows: Vec<MetricRow>,
    pub summary: Summary,
    pub trained: Option<Trained>,
    pub test_problems: Vec<Sample>,
    /// Schedule-check failures, one message each.
    pub violations: Vec<String>,
    /// Executed schedule of every successful run, as (arm, problem, log).
    pub logs: Vec<(Arm, usize, Vec<LogEntry>)>,
}

impl ExperimentResult {
    /// Final-iteration value of `metric` per problem for `arm`, skipping failures.
    pub fn finals(&self, arm: Arm, metric: &str) -> Vec<f64> {
        let last = self.summary.iterations;
        self.rows
            .iter()
            .filter(|r| r.arm == arm.name() && r.metric == metric && r.iteration == last)
            .map(|r| r.value)
            .collect()
    }
}

/// Value written for a problem whose run failed.
pub const FAILED_SENTINEL: f64 = -1.0;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let start = Instant::now();
    let model = cfg.validate()?;
    let graph = model.build_graph();
    let engine = cfg.engine(&model);
    let tests = cfg.test_problems(&model)?;
    let trained = if cfg.arms.iter().any(|a| a.needs_predictors()) {
        Some(match &cfg.forests {
            Some(dir) => load_forests(dir, &model, &graph)?,
            None => train(cfg, &model, &graph)?,
        })
    } else {
        None
    };
    let attachments: &[Attachment] = trained.as_ref().map_or(&[], |t| &t.attachments);
    let mut arms: Vec<Arm> = Vec::new();
    for &a in &cfg.arms {
        if !arms.contains(&a) {
            arms.push(a);
        }
    }

    let runs: Vec<Vec<Result<ArmRun, HarnessError>>> = tests
        .par_iter()
        .map(|sample| {
            arms.iter()
                .map(|&arm| run_arm(arm, &model, &graph, &engine, attachments, sample))
                .collect()
        })
        .collect();

    let names = model.metric_names();
    let mut rows = Vec::with_capacity(arms.len() * tests.len() * engine.iterations * names.len());
    let mut summary = Summary {
        model: format!("{:?}", model.kind()).to_lowercase(),
        seed: cfg.seed,
        dataset_hash: dataset_hash(&tests),
        trials: cfg.trials,
        iterations: engine.iterations,
        ..Summary::default()
    };
    let mut violations = Vec::new();
    let mut logs = Vec::new();
    for (a, &arm) in arms.iter().enumerate() {
        let mut sums = vec![vec![Vec::new(); engine.iterations]; names.len()];
        let mut failures = 0;
        for (p, per_arm) in runs.iter().enumerate() {
            match &per_arm[a] {
                Ok(run) => {
                    if let Err(e) = check_schedule_log(&run.trace.log) {
                        violations.push(format!("{arm} problem {p}: {e}"));
                    }
                    logs.push((arm, p, run.trace.log.clone()));
                    summary.consensus_failures += run.trace.diagnostics.consensus_failures;
                    for (it, values) in run.metrics.iter().enumerate() {
                        for (m, (name, value)) in values.iter().enumerate() {
                            sums[m][it].push(*value);
                            rows.push(MetricRow {
                                arm: arm.name().into(),
                                problem_id: p,
                                iteration: it + 1,
                                metric: (*name).into(),
                                value: *value,
                            });
                        }
                    }
                }
                Err(_) => {
                    failures += 1;
                    for it in 1..=engine.iterations {
                        for name in names {
                            rows.push(MetricRow {
                                arm: arm.name().into(),
                                problem_id: p,
                                iteration: it,
                                metric: (*name).into(),
                                value: FAILED_SENTINEL,
                            });
                        }
                    }
                }
            }
        }
        let curves = names
            .iter()
            .zip(&sums)
            .map(|(name, per_it)| ((*name).to_string(), curve(per_it)))
            .collect();
        summary.arms.insert(arm.name().into(), curves);
        summary.failures.insert(arm.name().into(), failures);
    }
    summary.schedule_violations = violations.len();
    if let Some(t) = &trained {
        for (a, ex) in t.attachments.iter().zip(&t.examples) {
            summary.training_examples.insert(a.def.name.clone(), ex.len());
        }
        summary.training_discarded = t.discarded;
        summary.training_seconds = t.seconds;
    }
    summary.seconds = start.elapsed().as_secs_f64();
    Ok(ExperimentResult {
        rows,
        summary,
        trained,
        test_problems: tests,
        violations,
        logs,
    })
}

fn curve(per_iteration: &[Vec<f64>]) -> Curve {
    let mut c = Curve::default();
    for values in per_iteration {
        let n = values.len() as f64;
        if values.is_empty() {
            c.mean.push(0.0);
            c.stderr.push(0.0);
            continue;
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        c.mean.push(mean);
        c.stderr.push((var / n).sqrt());
    }
    c
}

/// Per-iteration beliefs of the tracked variables as trace rows.
pub fn trace_rows(graph: &FactorGraph, problem_id: usize, trace: &InferenceTrace) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for record in &trace.iterations {
        for (k, &v) in trace.tracked.iter().enumerate() {
            let m = &record.beliefs[k];
            let id = &graph.variables[v].id;
            let means = m.mean().unwrap_or_default();
            let vars = m.variances().unwrap_or_default();
            for (d, value) in means.iter().enumerate() {
                rows.push(TraceRow::new(problem_id, record.iteration, id, format!("mean[{d}]"), *value));
            }
            for (d, value) in vars.iter().enumerate() {
                rows.push(TraceRow::new(problem_id, record.iteration, id, format!("var[{d}]"), *value));
            }
        }
        rows.push(TraceRow::new(problem_id, record.iteration, "*", "maxChange".into(), record.max_change));
    }
    rows
}
