//! Sequential message-passing executor.
//!
//! One iteration is an upward sweep over layers followed by a downward
//! sweep. In the first iteration, consensus steps run at the head of their
//! target layer, after the layer below has received its upward messages.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expfam::Message;
use crate::factors::{FactorKind, InferenceMode, InputKind, LinearRule, Outgoing, QuadratureSpec};
use crate::graph::FactorGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("non-finite message from factor {factor} in iteration {iteration}")]
    NonFinite { factor: String, iteration: usize },
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("variable {0} is observable but has no observation")]
    Unconditioned(String),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Step size for messages from factors of kind `factor` to the edge with role `target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampingRule {
    pub factor: String,
    pub target: String,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct EngineConfig {
    pub iterations: usize,
    pub mode: InferenceMode,
    pub damping: Vec<DampingRule>,
    /// Stop once no belief moves more than this in natural parameters.
    pub convergence_tol: Option<f64>,
    pub quadrature: QuadratureSpec,
    /// Update rule for linear-Gaussian factors under VMP.
    pub linear: LinearRule,
    /// Seed of a fixed shuffle of factor updates within each layer and
    /// direction. `None` keeps graph order.
    pub update_order: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            iterations: 50,
            mode: InferenceMode::Vmp,
            damping: Vec::new(),
            convergence_tol: None,
            quadrature: QuadratureSpec::default(),
            linear: LinearRule::Exact,
            update_order: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        for rule in &self.damping {
            if !(rule.alpha > 0.0 && rule.alpha <= 1.0) {
                return Err(EngineError::Config(format!(
                    "damping step for {}→{} must lie in (0, 1], got {}",
                    rule.factor, rule.target, rule.alpha
                )));
            }
        }
        if let Some(tol) = self.convergence_tol {
            if !(tol >= 0.0) {
                return Err(EngineError::Config(format!("convergence tolerance {tol}")));
            }
        }
        self.quadrature.validate().map_err(EngineError::Config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Consensus,
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Lateral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Consensus { attachment: usize },
    Message { factor: usize, edge: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub action: Action,
    pub layer: usize,
    pub direction: Direction,
    pub sweep: Sweep,
}

impl Step {
    pub fn phase(&self) -> Phase {
        match self.action {
            Action::Consensus { .. } => Phase::Consensus,
            Action::Message { .. } => Phase::Standard,
        }
    }
}

/// Where a predictor delivers messages and what it reads.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusSite {
    pub name: String,
    pub targets: Vec<usize>,
    pub context: Vec<usize>,
}

/// Steps of the first iteration and of every later iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub first: Vec<Step>,
    pub rest: Vec<Step>,
    pub sites: Vec<ConsensusSite>,
}

impl Schedule {
    /// Same steps with the factors of every run of message steps sharing a
    /// layer, direction and sweep visited in a seeded random order. A
    /// factor's edges stay together and consensus steps do not move, so
    /// the order is the same in every iteration.
    pub fn permuted(&self, seed: u64) -> Schedule {
        let shuffle = |steps: &[Step]| {
            let mut out = Vec::with_capacity(steps.len());
            let mut i = 0;
            while i < steps.len() {
                let key = (steps[i].layer, steps[i].direction, steps[i].sweep);
                let run_end = steps[i..]
                    .iter()
                    .position(|s| s.phase() == Phase::Consensus || (s.layer, s.direction, s.sweep) != key)
                    .map_or(steps.len(), |k| i + k);
                if run_end == i {
                    out.push(steps[i]);
                    i += 1;
                    continue;
                }
                let mut groups: Vec<Vec<Step>> = Vec::new();
                for s in &steps[i..run_end] {
                    let factor = |s: &Step| match s.action {
                        Action::Message { factor, .. } => factor,
                        Action::Consensus { .. } => usize::MAX,
                    };
                    match groups.last_mut() {
                        Some(g) if factor(&g[0]) == factor(s) => g.push(*s),
                        _ => groups.push(vec![*s]),
                    }
                }
                let tag = (key.0 as u64) << 4 | (key.1 as u64) << 2 | key.2 as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(tag);
                groups.shuffle(&mut rng);
                out.extend(groups.into_iter().flatten());
                i = run_end;
            }
            out
        };
        Schedule {
            first: shuffle(&self.first),
            rest: shuffle(&self.rest),
            sites: self.sites.clone(),
        }
    }

    pub fn consensus_steps(&self) -> usize {
        self.first
            .iter()
            .chain(&self.rest)
            .filter(|s| s.phase() == Phase::Consensus)
            .count()
    }
}

/// Builds the bottom-up-then-top-down schedule.
pub fn make_schedule(graph: &FactorGraph, sites: &[ConsensusSite]) -> Result<Schedule, EngineError> {
    let mut site_layers = Vec::with_capacity(sites.len());
    for site in sites {
        let Some(&first) = site.targets.first() else {
            return Err(EngineError::Schedule(format!("predictor {} has no targets", site.name)));
        };
        let layer = graph.variables[first].layer;
        if site.targets.iter().any(|&t| graph.variables[t].layer != layer) {
            return Err(EngineError::Schedule(format!(
                "predictor {} targets several layers",
                site.name
            )));
        }
        if layer == 0 || site.context.is_empty() {
            return Err(EngineError::Schedule(format!(
                "predictor {} has an empty context layer",
                site.name
            )));
        }
        if site.context.iter().any(|&c| graph.variables[c].layer + 1 != layer) {
            return Err(EngineError::Schedule(format!(
                "predictor {} reads outside the layer below its targets",
                site.name
            )));
        }
        site_layers.push(layer);
    }

    let top = graph.max_layer();
    let mut up: Vec<Vec<Step>> = vec![Vec::new(); top + 1];
    let mut down: Vec<Vec<Step>> = vec![Vec::new(); top + 1];
    let mut lateral: Vec<Vec<(usize, usize)>> = vec![Vec::new(); top + 1];
    for (f, factor) in graph.factors.iter().enumerate() {
        if matches!(factor.kind, FactorKind::Prior { .. }) {
            continue;
        }
        let base = graph.base_layer(f);
        let spans = factor.vars.iter().any(|&v| graph.variables[v].layer != base);
        for (e, &v) in factor.vars.iter().enumerate() {
            let var = &graph.variables[v];
            if var.observable {
                continue;
            }
            let layer = var.layer;
            let step = |direction, sweep| Step {
                action: Action::Message { factor: f, edge: e },
                layer,
                direction,
                sweep,
            };
            if !spans {
                lateral[layer].push((f, e));
            } else if layer > base {
                up[layer].push(step(Direction::Up, Sweep::Up));
            } else {
                down[layer].push(step(Direction::Down, Sweep::Down));
            }
        }
    }

    let build = |with_consensus: bool| {
        let mut steps = Vec::new();
        for layer in 0..=top {
            if with_consensus {
                for (i, _) in site_layers.iter().enumerate().filter(|(_, &l)| l == layer) {
                    steps.push(Step {
                        action: Action::Consensus { attachment: i },
                        layer,
                        direction: Direction::Up,
                        sweep: Sweep::Up,
                    });
                }
            }
            steps.extend(up[layer].iter().copied());
            steps.extend(lateral[layer].iter().map(|&(factor, edge)| Step {
                action: Action::Message { factor, edge },
                layer,
                direction: Direction::Lateral,
                sweep: Sweep::Up,
            }));
        }
        for layer in (0..top).rev() {
            steps.extend(down[layer].iter().copied());
            steps.extend(lateral[layer].iter().map(|&(factor, edge)| Step {
                action: Action::Message { factor, edge },
                layer,
                direction: Direction::Lateral,
                sweep: Sweep::Down,
            }));
        }
        steps
    };

    Ok(Schedule {
        first: build(true),
        rest: build(false),
        sites: sites.to_vec(),
    })
}

/// Supplies consensus messages when the schedule reaches a consensus step.
pub trait ConsensusHook {
    /// Messages for the site's targets, given all current beliefs.
    fn emit(
        &mut self,
        site: usize,
        graph: &FactorGraph,
        beliefs: &[Message],
    ) -> Result<Vec<(usize, Message)>, String>;
}

/// Hook that never sends anything; consensus steps become no-ops.
pub struct NoConsensus;

impl ConsensusHook for NoConsensus {
    fn emit(&mut self, _: usize, _: &FactorGraph, _: &[Message]) -> Result<Vec<(usize, Message)>, String> {
        Ok(Vec::new())
    }
}

/// Run-length compressed record of executed steps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub sweep: Sweep,
    pub layer: usize,
    pub phase: Phase,
    pub direction: Direction,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Factor updates skipped because the factor could not compute a message.
    pub factor_failures: usize,
    /// Updates skipped because they would have made a belief improper.
    pub improper_skips: usize,
    /// Messages carrying a quadrature flag.
    pub flagged: usize,
    pub consensus_failures: usize,
    /// Consensus messages delivered, per site.
    pub consensus_delivered: Vec<usize>,
    /// First few problems, for humans.
    pub notes: Vec<String>,
}

impl Diagnostics {
    fn note(&mut self, text: String) {
        if self.notes.len() < 16 {
            self.notes.push(text);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub beliefs: Vec<Message>,
    /// Largest change of any latent belief in natural parameters.
    pub max_change: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct InferenceTrace {
    pub tracked: Vec<usize>,
    /// Iteration 0 holds the beliefs before any message is sent.
    pub iterations: Vec<IterationRecord>,
    pub final_beliefs: Vec<Message>,
    pub log: Vec<LogEntry>,
    pub diagnostics: Diagnostics,
}

impl InferenceTrace {
    /// Equality of everything except wall-clock timings.
    pub fn same_beliefs(&self, other: &InferenceTrace) -> bool {
        self.tracked == other.tracked
            && self.final_beliefs == other.final_beliefs
            && self.iterations.len() == other.iterations.len()
            && self
                .iterations
                .iter()
                .zip(&other.iterations)
                .all(|(a, b)| {
                    a.iteration == b.iteration
                        && a.beliefs == b.beliefs
                        && a.max_change.to_bits() == b.max_change.to_bits()
                })
    }

    /// Tracked belief of variable `var` after iteration `iteration`.
    pub fn belief(&self, iteration: usize, var: usize) -> Option<&Message> {
        let pos = self.tracked.iter().position(|&t| t == var)?;
        self.iterations.get(iteration).map(|r| &r.beliefs[pos])
    }
}

/// Verifies the schedule invariants on an executed log.
pub fn check_schedule_log(log: &[LogEntry]) -> Result<(), String> {
    let mut iteration = usize::MAX;
    let mut sweep = Sweep::Up;
    let mut last_layer = 0usize;
    let mut standard_layers: Vec<usize> = Vec::new();
    for (i, e) in log.iter().enumerate() {
        if e.iteration != iteration {
            iteration = e.iteration;
            sweep = Sweep::Up;
            last_layer = 0;
            standard_layers.clear();
        }
        if e.phase == Phase::Consensus {
            if e.iteration != 1 {
                return Err(format!("entry {i}: consensus in iteration {}", e.iteration));
            }
            if e.sweep != Sweep::Up {
                return Err(format!("entry {i}: consensus in the downward sweep"));
            }
            if standard_layers.contains(&e.layer) {
                return Err(format!(
                    "entry {i}: consensus after standard messages in layer {}",
                    e.layer
                ));
            }
        }
        match (sweep, e.sweep) {
            (Sweep::Up, Sweep::Up) => {
                if e.layer < last_layer {
                    return Err(format!(
                        "entry {i}: upward sweep went from layer {last_layer} to {}",
                        e.layer
                    ));
                }
            }
            (Sweep::Up, Sweep::Down) => sweep = Sweep::Down,
            (Sweep::Down, Sweep::Down) => {
                if e.layer > last_layer {
                    return Err(format!(
                        "entry {i}: downward sweep went from layer {last_layer} to {}",
                        e.layer
                    ));
                }
            }
            (Sweep::Down, Sweep::Up) => {
                return Err(format!("entry {i}: upward step after the downward sweep"));
            }
        }
        if e.phase == Phase::Standard && e.sweep == Sweep::Up {
            standard_layers.push(e.layer);
        }
        last_layer = e.layer;
    }
    Ok(())
}

struct State<'g> {
    graph: &'g FactorGraph,
    mode: InferenceMode,
    linear: LinearRule,
    quadrature: QuadratureSpec,
    msgs: Vec<Vec<Message>>,
    alpha: Vec<Vec<f64>>,
    consensus: Vec<Option<Message>>,
    beliefs: Vec<Message>,
    cache: Vec<Option<(Vec<Message>, Vec<Outgoing>)>>,
    diagnostics: Diagnostics,
}

impl<'g> State<'g> {
    fn new(graph: &'g FactorGraph, cfg: &EngineConfig) -> Result<Self, EngineError> {
        if let Some(v) = graph
            .variables
            .iter()
            .find(|v| v.observable && v.observed.is_none())
        {
            return Err(EngineError::Unconditioned(v.id.clone()));
        }
        let mut msgs = Vec::with_capacity(graph.factors.len());
        let mut alpha = Vec::with_capacity(graph.factors.len());
        for f in &graph.factors {
            let roles = f.kind.roles();
            msgs.push(
                f.vars
                    .iter()
                    .map(|&v| match &f.kind {
                        FactorKind::Prior { message } => message.clone(),
                        _ => Message::uniform(graph.variables[v].family),
                    })
                    .collect(),
            );
            alpha.push(
                roles
                    .iter()
                    .map(|role| {
                        cfg.damping
                            .iter()
                            .find(|r| r.factor == f.kind.name() && r.target == *role)
                            .map_or(1.0, |r| r.alpha)
                    })
                    .collect(),
            );
        }
        let mut state = State {
            graph,
            mode: cfg.mode,
            linear: cfg.linear,
            quadrature: cfg.quadrature,
            msgs,
            alpha,
            consensus: vec![None; graph.variables.len()],
            beliefs: Vec::new(),
            cache: vec![None; graph.factors.len()],
            diagnostics: Diagnostics::default(),
        };
        state.beliefs = (0..graph.variables.len())
            .map(|v| state.product(v, None, None))
            .collect::<Result<_, _>>()
            .map_err(|e| EngineError::Config(format!("initial beliefs: {e}")))?;
        Ok(state)
    }

    /// Product of everything arriving at `v`, optionally replacing the
    /// message on `(factor, edge)` or leaving it out.
    fn product(
        &self,
        v: usize,
        replace: Option<(usize, usize, &Message)>,
        skip: Option<(usize, usize)>,
    ) -> Result<Message, crate::expfam::MessageError> {
        let var = &self.graph.variables[v];
        if let Some(obs) = &var.observed {
            return Ok(obs.clone());
        }
        let mut acc = Message::uniform(var.family);
        for &(f, e) in self.graph.neighbours(v) {
            if skip == Some((f, e)) {
                continue;
            }
            match replace {
                Some((rf, re, m)) if rf == f && re == e => acc.accumulate(m)?,
                _ => acc.accumulate(&self.msgs[f][e])?,
            }
        }
        if let Some(c) = &self.consensus[v] {
            acc.accumulate(c)?;
        }
        Ok(acc)
    }

    fn cavity(&self, f: usize, e: usize) -> Message {
        let v = self.graph.factors[f].vars[e];
        if let Some(obs) = &self.graph.variables[v].observed {
            return obs.clone();
        }
        let own = &self.msgs[f][e];
        if !own.is_point_mass() && !self.beliefs[v].is_point_mass() {
            if let Ok(m) = self.beliefs[v].divide(own) {
                return m;
            }
        }
        self.product(v, None, Some((f, e)))
            .unwrap_or_else(|_| Message::uniform(self.graph.variables[v].family))
    }

    fn inputs(&self, f: usize) -> Vec<Message> {
        let factor = &self.graph.factors[f];
        match factor.kind.input_kind(self.mode, self.linear) {
            InputKind::Belief => factor.vars.iter().map(|&v| self.beliefs[v].clone()).collect(),
            InputKind::Cavity => (0..factor.vars.len()).map(|e| self.cavity(f, e)).collect(),
            InputKind::ChildCavity => (0..factor.vars.len())
                .map(|e| if e == 0 { self.cavity(f, e) } else { self.beliefs[factor.vars[e]].clone() })
                .collect(),
        }
    }

    fn send(&mut self, f: usize, e: usize, iteration: usize) -> Result<(), EngineError> {
        let factor = &self.graph.factors[f];
        let v = factor.vars[e];
        if self.graph.variables[v].observed.is_some() {
            return Ok(());
        }
        let inputs = self.inputs(f);
        let result = if factor.kind.is_joint() {
            match &self.cache[f] {
                Some((cached, out)) if *cached == inputs => Ok(out[e].clone()),
                _ => match factor.kind.messages(&inputs, self.mode, self.linear, &self.quadrature) {
                    Ok(out) => {
                        let mine = out[e].clone();
                        self.cache[f] = Some((inputs, out));
                        Ok(mine)
                    }
                    Err(err) => Err(err),
                },
            }
        } else {
            factor.kind.message(e, &inputs, self.mode, self.linear, &self.quadrature)
        };
        let out = match result {
            Ok(out) => out,
            Err(err) => {
                self.diagnostics.factor_failures += 1;
                self.diagnostics
                    .note(format!("iteration {iteration}: {} → edge {e}: {err}", factor.id));
                return Ok(());
            }
        };
        if out.flag.is_some() {
            self.diagnostics.flagged += 1;
        }
        let alpha = self.alpha[f][e];
        let new = if alpha < 1.0 {
            match Message::damp(&self.msgs[f][e], &out.message, alpha) {
                Ok(m) => m,
                Err(_) => out.message,
            }
        } else {
            out.message
        };
        if !new.is_finite() {
            return Err(EngineError::NonFinite {
                factor: factor.id.clone(),
                iteration,
            });
        }
        let belief = match self.product(v, Some((f, e, &new)), None) {
            Ok(b) if !negative_precision(&b) => b,
            Ok(_) | Err(_) => {
                self.diagnostics.improper_skips += 1;
                self.diagnostics.note(format!(
                    "iteration {iteration}: {} → {} would make the belief improper",
                    factor.id, self.graph.variables[v].id
                ));
                return Ok(());
            }
        };
        self.msgs[f][e] = new;
        self.beliefs[v] = belief;
        Ok(())
    }

    fn deliver_consensus(&mut self, site: usize, messages: Vec<(usize, Message)>, iteration: usize) {
        for (v, m) in messages {
            let var = &self.graph.variables[v];
            if m.family() != var.family || !m.is_proper() || var.observed.is_some() {
                self.diagnostics.consensus_failures += 1;
                self.diagnostics
                    .note(format!("iteration {iteration}: rejected consensus message for {}", var.id));
                continue;
            }
            let previous = self.consensus[v].replace(m);
            match self.product(v, None, None) {
                Ok(b) if !negative_precision(&b) => {
                    self.beliefs[v] = b;
                    self.diagnostics.consensus_delivered[site] += 1;
                }
                _ => {
                    self.consensus[v] = previous;
                    self.diagnostics.consensus_failures += 1;
                }
            }
        }
    }
}

fn negative_precision(m: &Message) -> bool {
    match m {
        Message::Gaussian(g) => g.precision() < -crate::expfam::PRECISION_TOLERANCE,
        Message::MvGaussian(g) => !g.is_uniform() && g.min_eigenvalue() < -crate::expfam::PRECISION_TOLERANCE,
        _ => false,
    }
}

fn push_log(log: &mut Vec<LogEntry>, iteration: usize, step: &Step) {
    if let Some(last) = log.last_mut() {
        if last.iteration == iteration
            && last.sweep == step.sweep
            && last.layer == step.layer
            && last.phase == step.phase()
            && last.direction == step.direction
        {
            last.count += 1;
            return;
        }
    }
    log.push(LogEntry {
        iteration,
        sweep: step.sweep,
        layer: step.layer,
        phase: step.phase(),
        direction: step.direction,
        count: 1,
    });
}

/// Runs the schedule for `cfg.iterations` iterations, recording the beliefs
/// of `tracked` after each.
pub fn run_inference(
    graph: &FactorGraph,
    cfg: &EngineConfig,
    schedule: &Schedule,
    tracked: &[usize],
    hook: &mut dyn ConsensusHook,
) -> Result<InferenceTrace, EngineError> {
    cfg.validate()?;
    let permuted;
    let schedule = match cfg.update_order {
        Some(seed) => {
            permuted = schedule.permuted(seed);
            &permuted
        }
        None => schedule,
    };
    let mut state = State::new(graph, cfg)?;
    state.diagnostics.consensus_delivered = vec![0; schedule.sites.len()];
    let snapshot = |s: &State| tracked.iter().map(|&v| s.beliefs[v].clone()).collect::<Vec<_>>();
    let mut iterations = vec![IterationRecord {
        iteration: 0,
        beliefs: snapshot(&state),
        max_change: 0.0,
        seconds: 0.0,
    }];
    let mut log = Vec::new();
    for iteration in 1..=cfg.iterations {
        let start = Instant::now();
        let before = state.beliefs.clone();
        let steps = if iteration == 1 {
            &schedule.first
        } else {
            &schedule.rest
        };
        for step in steps {
            push_log(&mut log, iteration, step);
            match step.action {
                Action::Message { factor, edge } => state.send(factor, edge, iteration)?,
                Action::Consensus { attachment } => {
                    match hook.emit(attachment, graph, &state.beliefs) {
                        Ok(messages) => state.deliver_consensus(attachment, messages, iteration),
                        Err(err) => {
                            state.diagnostics.consensus_failures += 1;
                            state.diagnostics.note(format!(
                                "iteration {iteration}: predictor {} failed: {err}",
                                schedule.sites[attachment].name
                            ));
                        }
                    }
                }
            }
        }
        let max_change = before
            .iter()
            .zip(&state.beliefs)
            .zip(&graph.variables)
            .filter(|(_, var)| var.observed.is_none())
            .map(|((a, b), _)| a.max_natural_difference(b))
            .fold(0.0, f64::max);
        iterations.push(IterationRecord {
            iteration,
            beliefs: snapshot(&state),
            max_change,
            seconds: start.elapsed().as_secs_f64(),
        });
        if cfg.convergence_tol.is_some_and(|tol| max_change < tol) {
            break;
        }
    }
    Ok(InferenceTrace {
        tracked: tracked.to_vec(),
        iterations,
        final_beliefs: state.beliefs,
        log,
        diagnostics: state.diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(iteration: usize, sweep: Sweep, layer: usize, phase: Phase) -> LogEntry {
        LogEntry {
            iteration,
            sweep,
            layer,
            phase,
            direction: Direction::Up,
            count: 1,
        }
    }

    #[test]
    fn log_checker_accepts_valid_order() {
        let log = vec![
            entry(1, Sweep::Up, 1, Phase::Standard),
            entry(1, Sweep::Up, 2, Phase::Consensus),
            entry(1, Sweep::Up, 2, Phase::Standard),
            entry(1, Sweep::Down, 1, Phase::Standard),
            entry(2, Sweep::Up, 1, Phase::Standard),
        ];
        assert!(check_schedule_log(&log).is_ok());
    }

    #[test]
    fn log_checker_rejects_violations() {
        let late = vec![entry(2, Sweep::Up, 2, Phase::Consensus)];
        assert!(check_schedule_log(&late).is_err());
        let after = vec![
            entry(1, Sweep::Up, 2, Phase::Standard),
            entry(1, Sweep::Up, 2, Phase::Consensus),
        ];
        assert!(check_schedule_log(&after).is_err());
        let top_down = vec![
            entry(1, Sweep::Up, 2, Phase::Standard),
            entry(1, Sweep::Up, 1, Phase::Standard),
        ];
        assert!(check_schedule_log(&top_down).is_err());
    }
}
