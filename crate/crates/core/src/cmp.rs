//! Consensus layer: predictor attachments, context capture, training-set
//! generation and consensus emission.
//!
//! Contexts are always captured by the same path: a [`CmpHook`] records the
//! context beliefs when the engine reaches a consensus step in iteration 1.
//! Predictors are trained stage by stage, so the contexts of stage `k` are
//! captured with every trained stage below `k` sending its messages.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{
    make_schedule, run_inference, ConsensusHook, ConsensusSite, EngineConfig, EngineError, InferenceTrace,
    Schedule,
};
use crate::expfam::{Gaussian, Message, MvGaussian};
use crate::forest::{Forest, ForestConfig, ForestError, Row};
use crate::graph::{FactorGraph, GraphError};
use crate::models::{ModelError, PredictorDef, Sample};

/// Smallest variance a consensus message may carry.
pub const CONSENSUS_VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CmpError {
    #[error("predictor {0} is not trained")]
    Untrained(String),
    #[error("predictor {name}: {source}")]
    Forest { name: String, source: ForestError },
    #[error("predictor {name}: no training examples survived ({discarded} discarded)")]
    NoExamples { name: String, discarded: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("training set line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where training oracles come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TrainSource {
    /// Final beliefs of a long standard run.
    Convergence,
    /// Point masses at values drawn from the model.
    Samples,
    /// Point masses at externally supplied labels.
    Labels,
}

/// Context beliefs and one oracle message per predictor target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub context: Vec<Message>,
    pub oracles: Vec<Message>,
}

/// A predictor definition with its forest, once trained.
#[derive(Clone, Debug)]
pub struct Attachment {
    pub def: PredictorDef,
    pub forest: Option<Forest>,
}

impl Attachment {
    pub fn new(def: PredictorDef) -> Self {
        Attachment { def, forest: None }
    }

    pub fn site(&self) -> ConsensusSite {
        ConsensusSite {
            name: self.def.name.clone(),
            targets: self.def.targets.clone(),
            context: self.def.context.clone(),
        }
    }

    /// One consensus message per target from the given context beliefs.
    pub fn emit(&self, graph: &FactorGraph, context: &[Message]) -> Result<Vec<(usize, Message)>, CmpError> {
        let forest = self
            .forest
            .as_ref()
            .ok_or_else(|| CmpError::Untrained(self.def.name.clone()))?;
        let fail = |source| CmpError::Forest {
            name: self.def.name.clone(),
            source,
        };
        self.def
            .targets
            .iter()
            .enumerate()
            .map(|(t, &v)| {
                let features = self.def.featurizer.features(context, t);
                let m = forest.predict(&features).map_err(fail)?;
                let m = floor_variance(&m).ok_or(fail(ForestError::NoPrediction))?;
                if m.family() != graph.variables[v].family {
                    return Err(fail(ForestError::NoPrediction));
                }
                Ok((v, m))
            })
            .collect()
    }
}

/// Schedule sites for `attachments`, in order.
pub fn sites(attachments: &[Attachment]) -> Vec<ConsensusSite> {
    attachments.iter().map(Attachment::site).collect()
}

pub fn schedule_for(graph: &FactorGraph, attachments: &[Attachment]) -> Result<Schedule, CmpError> {
    Ok(make_schedule(graph, &sites(attachments))?)
}

/// Clamps the variance (every covariance eigenvalue) of a continuous
/// message from below. `None` if the message has no finite moments.
pub fn floor_variance(m: &Message) -> Option<Message> {
    match m {
        Message::Gaussian(g) => {
            let (mean, var) = (g.mean(), g.variance());
            if !mean.is_finite() || var.is_nan() {
                return None;
            }
            let var = if var.is_finite() { var.max(CONSENSUS_VARIANCE_FLOOR) } else { return None };
            Some(Gaussian::from_mean_variance(mean, var).into())
        }
        Message::MvGaussian(g) => {
            let mean = g.mean()?;
            let cov = g.covariance()?;
            if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                return None;
            }
            let eig = SymmetricEigen::new((&cov + cov.transpose()) * 0.5);
            let clamped = eig.eigenvalues.map(|v| v.max(CONSENSUS_VARIANCE_FLOOR));
            let cov = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            let cov = (&cov + cov.transpose()) * 0.5;
            Some(MvGaussian::from_mean_covariance(&mean, &cov).into())
        }
        _ => None,
    }
}

/// Captures contexts at consensus steps and emits messages for enabled
/// attachments. Disabled attachments are still captured, and still
/// predicted when `report` is set, but never send anything.
pub struct CmpHook<'a> {
    attachments: &'a [Attachment],
    enabled: Vec<bool>,
    report: bool,
    pub contexts: Vec<Option<Vec<Message>>>,
    pub predictions: Vec<Option<Vec<(usize, Message)>>>,
}

impl<'a> CmpHook<'a> {
    pub fn new(attachments: &'a [Attachment], enabled: Vec<bool>, report: bool) -> Self {
        assert_eq!(enabled.len(), attachments.len(), "one flag per attachment");
        CmpHook {
            attachments,
            enabled,
            report,
            contexts: vec![None; attachments.len()],
            predictions: vec![None; attachments.len()],
        }
    }

    /// Hook that only captures.
    pub fn capture_only(attachments: &'a [Attachment]) -> Self {
        Self::new(attachments, vec![false; attachments.len()], false)
    }
}

impl ConsensusHook for CmpHook<'_> {
    fn emit(&mut self, site: usize, graph: &FactorGraph, beliefs: &[Message]) -> Result<Vec<(usize, Message)>, String> {
        let att = &self.attachments[site];
        let context: Vec<Message> = att.def.context.iter().map(|&v| beliefs[v].clone()).collect();
        let sends = self.enabled[site] && !att.def.report_only;
        let result = if sends || (self.report && att.forest.is_some()) {
            Some(att.emit(graph, &context))
        } else {
            None
        };
        self.contexts[site] = Some(context);
        match result {
            None => Ok(Vec::new()),
            Some(Ok(messages)) => {
                self.predictions[site] = Some(messages.clone());
                Ok(if sends { messages } else { Vec::new() })
            }
            Some(Err(e)) if sends => Err(e.to_string()),
            Some(Err(_)) => Ok(Vec::new()),
        }
    }
}

/// Attachments of stages below `stage` that have forests and send.
pub fn enabled_below(attachments: &[Attachment], stage: usize) -> Vec<bool> {
    attachments
        .iter()
        .map(|a| a.def.stage < stage && a.forest.is_some())
        .collect()
}

/// Runs inference on a conditioned graph with the given attachments enabled.
pub fn run_with(
    graph: &FactorGraph,
    engine: &EngineConfig,
    attachments: &[Attachment],
    enabled: Vec<bool>,
    report: bool,
    tracked: &[usize],
) -> Result<(InferenceTrace, Vec<Option<Vec<Message>>>, Vec<Option<Vec<(usize, Message)>>>), CmpError> {
    let schedule = schedule_for(graph, attachments)?;
    let mut hook = CmpHook::new(attachments, enabled, report);
    let trace = run_inference(graph, engine, &schedule, tracked, &mut hook)?;
    Ok((trace, hook.contexts, hook.predictions))
}

/// Examples per attachment (empty for attachments outside the stage) and the
/// number of problems discarded.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeneratedSet {
    pub examples: Vec<Vec<TrainingExample>>,
    pub discarded: usize,
}

fn first_iteration(engine: &EngineConfig) -> EngineConfig {
    EngineConfig {
        iterations: 1,
        convergence_tol: None,
        ..engine.clone()
    }
}

/// Captured contexts for `stage`, with all trained lower stages sending.
fn capture(
    graph: &FactorGraph,
    engine: &EngineConfig,
    attachments: &[Attachment],
    stage: usize,
) -> Result<Vec<Option<Vec<Message>>>, CmpError> {
    let enabled = enabled_below(attachments, stage);
    let (_, contexts, _) = run_with(graph, &first_iteration(engine), attachments, enabled, false, &[])?;
    Ok(contexts)
}

fn in_stage(attachments: &[Attachment], stage: usize) -> Vec<usize> {
    (0..attachments.len()).filter(|&i| attachments[i].def.stage == stage).collect()
}

fn collect(attachments: &[Attachment], per_problem: Vec<Option<Vec<(usize, TrainingExample)>>>) -> GeneratedSet {
    let mut set = GeneratedSet {
        examples: vec![Vec::new(); attachments.len()],
        discarded: 0,
    };
    for p in per_problem {
        match p {
            Some(list) => list.into_iter().for_each(|(i, ex)| set.examples[i].push(ex)),
            None => set.discarded += 1,
        }
    }
    set
}

/// Outcome of a standard run used for convergence oracles.
#[derive(Clone, Debug)]
pub struct LongRun {
    pub final_beliefs: Vec<Message>,
    /// Contexts seen by every attachment with no predictor sending.
    pub contexts: Vec<Option<Vec<Message>>>,
}

/// Standard runs of `long_iterations` on each problem. A run that fails
/// with non-finite values or ends with non-finite beliefs gives `None`.
pub fn long_runs(
    graph: &FactorGraph,
    engine: &EngineConfig,
    attachments: &[Attachment],
    problems: &[Sample],
    long_iterations: usize,
) -> Result<Vec<Option<LongRun>>, CmpError> {
    let long = EngineConfig {
        iterations: long_iterations,
        convergence_tol: None,
        ..engine.clone()
    };
    problems
        .par_iter()
        .map(|sample| -> Result<Option<LongRun>, CmpError> {
            let g = graph.condition(&sample.observation_messages())?;
            let (trace, contexts, _) =
                match run_with(&g, &long, attachments, vec![false; attachments.len()], false, &[]) {
                    Ok(r) => r,
                    Err(CmpError::Engine(EngineError::NonFinite { .. })) => return Ok(None),
                    Err(e) => return Err(e),
                };
            if trace.final_beliefs.iter().any(|m| !m.is_finite()) {
                return Ok(None);
            }
            Ok(Some(LongRun {
                final_beliefs: trace.final_beliefs,
                contexts,
            }))
        })
        .collect()
}

/// Examples for `stage` whose oracles are the final beliefs of `runs`.
/// Contexts come from the runs themselves unless a lower stage is trained,
/// in which case a first iteration with those predictors sending is rerun.
pub fn from_long_runs(
    graph: &FactorGraph,
    engine: &EngineConfig,
    attachments: &[Attachment],
    stage: usize,
    problems: &[Sample],
    runs: &[Option<LongRun>],
) -> Result<GeneratedSet, CmpError> {
    let members = in_stage(attachments, stage);
    let lower_active = enabled_below(attachments, stage).iter().any(|&b| b);
    let per_problem = problems
        .par_iter()
        .zip(runs)
        .map(|(sample, run)| -> Result<Option<Vec<(usize, TrainingExample)>>, CmpError> {
            let Some(run) = run else {
                return Ok(None);
            };
            let mut contexts = if lower_active {
                let g = graph.condition(&sample.observation_messages())?;
                capture(&g, engine, attachments, stage)?
            } else {
                run.contexts.clone()
            };
            let mut out = Vec::new();
            for &i in &members {
                let Some(context) = contexts[i].take() else {
                    return Ok(None);
                };
                let oracles = attachments[i].def.targets.iter().map(|&v| run.final_beliefs[v].clone()).collect();
                out.push((i, TrainingExample { context, oracles }));
            }
            Ok(Some(out))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(collect(attachments, per_problem))
}

/// Oracles are the final beliefs of a standard run of `long_iterations`.
/// Problems whose run fails or ends with non-finite beliefs are discarded.
pub fn from_convergence(
    graph: &FactorGraph,
    engine: &EngineConfig,
    attachments: &[Attachment],
    stage: usize,
    problems: &[Sample],
    long_iterations: usize,
) -> Result<GeneratedSet, CmpError> {
    let runs = long_runs(graph, engine, attachments, problems, long_iterations)?;
    from_long_runs(graph, engine, attachments, stage, problems, &runs)
}

/// Oracles are point masses at the labels carried in each sample's latents.
/// Problems missing a label for some target are skipped.
pub fn from_labels(
    graph: &FactorGraph,
    engine: &EngineConfig,
    attachments: &[Attachment],
    stage: usize,
    labelled: &[Sample],
) -> Result<GeneratedSet, CmpError> {
    let members = in_stage(attachments, stage);
    let per_problem = labelled
        .par_iter()
        .map(|sample| -> Result<Option<Vec<(usize, TrainingExample)>>, CmpError> {
            let mut oracles_for = Vec::new();
            for &i in &members {
                let mut oracles = Vec::new();
                for &v in &attachments[i].def.targets {
                    match sample.latents.get(&graph.variables[v].id) {
                        Some(label) => oracles.push(Message::point_mass(label.clone())),
                        None => return Ok(None),
                    }
                }
                oracles_for.push(oracles);
            }
            let g = graph.condition(&sample.observation_messages())?;
            let mut contexts = capture(&g, engine, attachments, stage)?;
            let mut out = Vec::new();
            for (&i, oracles) in members.iter().zip(oracles_for) {
                let Some(context) = contexts[i].take() else {
                    return Ok(None);
                };
                out.push((i, TrainingExample { context, oracles }));
            }
            Ok(Some(out))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(collect(attachments, per_problem))
}

/// Oracles are point masses at the sampled latent values.
pub fn from_samples(
    graph: &FactorGraph,
    engine: &EngineConfig,
    attachments: &[Attachment],
    stage: usize,
    samples: &[Sample],
) -> Result<GeneratedSet, CmpError> {
    from_labels(graph, engine, attachments, stage, samples)
}

/// Deterministic seed for item `index` of a named stream.
pub fn derive_seed(seed: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Mean and row-major covariance of an oracle; point masses have zero covariance.
fn oracle_moments(m: &Message) -> Option<(Vec<f64>, Vec<f64>)> {
    match m {
        Message::PointMass(_) => {
            let mean = m.mean()?;
            let d = mean.len();
            Some((mean, vec![0.0; d * d]))
        }
        Message::Gaussian(g) => g.is_proper().then(|| (vec![g.mean()], vec![g.variance()])),
        Message::MvGaussian(g) => {
            let mean: DVector<f64> = g.mean()?;
            let cov = g.covariance()?;
            let d = mean.len();
            let flat = (0..d * d).map(|k| cov[(k / d, k % d)]).collect();
            Some((mean.iter().copied().collect(), flat))
        }
        Message::Bernoulli(_) => None,
    }
}

/// Forest rows for one attachment. Predictors with many targets contribute
/// `rows_per_problem` randomly chosen targets per example.
pub fn rows_for(def: &PredictorDef, examples: &[TrainingExample], seed: u64) -> Vec<Row> {
    let mut rows = Vec::new();
    for (d, ex) in examples.iter().enumerate() {
        let n = ex.oracles.len();
        let picks: Vec<usize> = match def.rows_per_problem {
            Some(k) if k < n => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &def.name, d as u64));
                let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        for t in picks {
            if let Some((target, covariance)) = oracle_moments(&ex.oracles[t]) {
                if target.iter().chain(&covariance).all(|v| v.is_finite()) {
                    rows.push(Row {
                        features: def.featurizer.features(&ex.context, t),
                        target,
                        covariance,
                    });
                }
            }
        }
    }
    rows
}

/// Trains every attachment of `stage` from its examples.
pub fn train_stage(
    graph: &FactorGraph,
    attachments: &mut [Attachment],
    stage: usize,
    set: &GeneratedSet,
    cfg: &ForestConfig,
) -> Result<(), CmpError> {
    for i in in_stage(attachments, stage) {
        let def = &attachments[i].def;
        let rows = rows_for(def, &set.examples[i], cfg.seed);
        if rows.is_empty() {
            return Err(CmpError::NoExamples {
                name: def.name.clone(),
                discarded: set.discarded,
            });
        }
        let family = graph.variables[def.targets[0]].family;
        let forest_cfg = ForestConfig {
            seed: derive_seed(cfg.seed, &def.name, stage as u64),
            ..cfg.clone()
        };
        let (forest, _) =
            Forest::train(&rows, family, def.featurizer.pair_block(), &forest_cfg).map_err(|source| {
                CmpError::Forest {
                    name: def.name.clone(),
                    source,
                }
            })?;
        attachments[i].forest = Some(forest);
    }
    Ok(())
}

/// Highest stage among `attachments`.
pub fn stages(attachments: &[Attachment]) -> usize {
    attachments.iter().map(|a| a.def.stage).max().unwrap_or(0)
}

/// What to train from.
pub enum TrainingData<'a> {
    Convergence { problems: &'a [Sample], long_iterations: usize },
    Labelled(&'a [Sample]),
}

/// Trains all stages in order. Returns the generated sets, one per stage.
pub fn train_all(
    graph: &FactorGraph,
    engine: &EngineConfig,
    attachments: &mut [Attachment],
    data: &TrainingData,
    cfg: &ForestConfig,
) -> Result<Vec<GeneratedSet>, CmpError> {
    let mut sets = Vec::new();
    // Standard runs do not depend on any predictor, so every stage shares them.
    let runs = match *data {
        TrainingData::Convergence {
            problems,
            long_iterations,
        } => long_runs(graph, engine, attachments, problems, long_iterations)?,
        TrainingData::Labelled(_) => Vec::new(),
    };
    for stage in 1..=stages(attachments) {
        let set = match *data {
            TrainingData::Convergence { problems, .. } => {
                from_long_runs(graph, engine, attachments, stage, problems, &runs)?
            }
            TrainingData::Labelled(labelled) => from_labels(graph, engine, attachments, stage, labelled)?,
        };
        train_stage(graph, attachments, stage, &set, cfg)?;
        sets.push(set);
    }
    Ok(sets)
}

/// Writes examples as JSON lines.
pub fn write_examples(mut w: impl Write, examples: &[TrainingExample]) -> Result<(), CmpError> {
    for ex in examples {
        serde_json::to_writer(&mut w, ex).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_examples(r: impl BufRead) -> Result<Vec<TrainingExample>, CmpError> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CmpError::Parse {
            line: k + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
