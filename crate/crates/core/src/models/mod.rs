//! The circle, square and face models, plus a linear-Gaussian chain used to
//! validate the engine.
//!
//! A [`ModelSpec`] is the serialized form. [`Model`] is the validated form,
//! with every default filled in.

pub mod chain;
pub mod circle;
pub mod face;
pub mod features;
pub mod square;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{DampingRule, EngineConfig};
use crate::expfam::Message;
use crate::factors::{InferenceMode, LinearRule};
use crate::graph::{FactorGraph, GraphError};

pub use chain::ChainSpec;
pub use circle::CircleSpec;
pub use face::FaceSpec;
pub use features::Featurizer;
pub use square::SquareSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("sampler gave up after {0} redraws")]
    Sampling(usize),
    #[error("metric needs a belief for {0}")]
    MissingBelief(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Circle,
    Square,
    Face,
    Chain,
}

/// Gaussian prior with isotropic variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl PriorSpec {
    pub fn new(mean: &[f64], variance: f64) -> Self {
        PriorSpec {
            mean: mean.to_vec(),
            variance,
        }
    }

    fn check(&self, name: &str, dim: usize) -> Result<(), ModelError> {
        if self.mean.len() != dim {
            return Err(ModelError::Spec(format!(
                "prior {name} needs a mean of length {dim}"
            )));
        }
        if !(self.variance > 0.0 && self.variance.is_finite())
            || self.mean.iter().any(|v| !v.is_finite())
        {
            return Err(ModelError::Spec(format!("prior {name} is not proper")));
        }
        Ok(())
    }

    pub fn message(&self) -> Message {
        if self.mean.len() == 1 {
            Message::gaussian(self.mean[0], self.variance)
        } else {
            Message::MvGaussian(crate::expfam::MvGaussian::isotropic(
                &self.mean,
                self.variance,
            ))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Dimensions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
}

/// Serialized model description. Missing entries take the model's defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelSpec {
    pub model: ModelKind,
    #[serde(default)]
    pub dimensions: Dimensions,
    #[serde(default)]
    pub priors: BTreeMap<String, PriorSpec>,
    #[serde(default)]
    pub noise_variances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry_variance: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(model: ModelKind) -> Self {
        ModelSpec {
            model,
            dimensions: Dimensions::default(),
            priors: BTreeMap::new(),
            noise_variances: BTreeMap::new(),
            symmetry_variance: None,
            seed: 0,
        }
    }

    pub(crate) fn prior(&self, name: &str, default: PriorSpec, dim: usize) -> Result<PriorSpec, ModelError> {
        let p = self.priors.get(name).cloned().unwrap_or(default);
        p.check(name, dim)?;
        Ok(p)
    }

    pub(crate) fn noise(&self, name: &str, default: f64) -> Result<f64, ModelError> {
        let v = self.noise_variances.get(name).copied().unwrap_or(default);
        if !(v > 0.0 && v.is_finite()) {
            return Err(ModelError::Spec(format!("noise variance {name} must be positive")));
        }
        Ok(v)
    }

    pub(crate) fn check_keys(&self, priors: &[&str], noises: &[&str]) -> Result<(), ModelError> {
        if let Some(k) = self.priors.keys().find(|k| !priors.contains(&k.as_str())) {
            return Err(ModelError::Spec(format!("unknown prior {k}")));
        }
        if let Some(k) = self.noise_variances.keys().find(|k| !noises.contains(&k.as_str())) {
            return Err(ModelError::Spec(format!("unknown noise variance {k}")));
        }
        Ok(())
    }
}

/// Seeded normal draws shared by the samplers.
pub(crate) struct Draws(ChaCha8Rng);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    /// Coordinate `k` of a draw from `prior`.
    pub fn prior(&mut self, prior: &PriorSpec, k: usize) -> f64 {
        prior.mean[k] + prior.variance.sqrt() * self.normal()
    }
}

/// One draw from a model: every latent value and every observation, keyed by variable id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub seed: u64,
    pub latents: BTreeMap<String, Vec<f64>>,
    pub observations: BTreeMap<String, Vec<f64>>,
}

impl Sample {
    pub fn observation_messages(&self) -> BTreeMap<String, Message> {
        self.observations
            .iter()
            .map(|(k, v)| (k.clone(), Message::point_mass(v.clone())))
            .collect()
    }

    pub fn latent(&self, id: &str) -> Result<&[f64], ModelError> {
        self.latents
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| ModelError::MissingBelief(id.to_string()))
    }
}

/// A predictor attached to a model: which variables it targets, which it
/// reads, and how it featurizes them.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorDef {
    pub name: String,
    /// Predictors of stage `k` train on contexts produced with stages below `k` active.
    pub stage: usize,
    /// One target for a single global variable; many for per-variable predictors.
    pub targets: Vec<usize>,
    pub context: Vec<usize>,
    pub featurizer: Featurizer,
    /// Only used to report forest-only estimates; never sends messages.
    pub report_only: bool,
    /// Training rows drawn per problem for per-variable predictors.
    pub rows_per_problem: Option<usize>,
}

/// Metric values at one point of a run.
pub type MetricValues = Vec<(&'static str, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Circle(CircleSpec),
    Square(SquareSpec),
    Face(FaceSpec),
    Chain(ChainSpec),
}

impl Model {
    pub fn from_spec(spec: &ModelSpec) -> Result<Model, ModelError> {
        Ok(match spec.model {
            ModelKind::Circle => Model::Circle(CircleSpec::from_spec(spec)?),
            ModelKind::Square => Model::Square(SquareSpec::from_spec(spec)?),
            ModelKind::Face => Model::Face(FaceSpec::from_spec(spec)?),
            ModelKind::Chain => Model::Chain(ChainSpec::from_spec(spec)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Circle(_) => ModelKind::Circle,
            Model::Square(_) => ModelKind::Square,
            Model::Face(_) => ModelKind::Face,
            Model::Chain(_) => ModelKind::Chain,
        }
    }

    /// Fully resolved spec, suitable for writing back out.
    pub fn to_spec(&self, seed: u64) -> ModelSpec {
        let mut spec = match self {
            Model::Circle(m) => m.to_spec(),
            Model::Square(m) => m.to_spec(),
            Model::Face(m) => m.to_spec(),
            Model::Chain(m) => m.to_spec(),
        };
        spec.seed = seed;
        spec
    }

    pub fn build_graph(&self) -> FactorGraph {
        match self {
            Model::Circle(m) => m.build_graph(),
            Model::Square(m) => m.build_graph(),
            Model::Face(m) => m.build_graph(),
            Model::Chain(m) => m.build_graph(),
        }
    }

    pub fn sample(&self, seed: u64) -> Result<Sample, ModelError> {
        match self {
            Model::Circle(m) => m.sample(seed),
            Model::Square(m) => m.sample(seed),
            Model::Face(m) => Ok(m.sample(seed)),
            Model::Chain(m) => Ok(m.sample(seed)),
        }
    }

    /// Inference settings used by the experiments for this model.
    pub fn default_engine(&self) -> EngineConfig {
        match self {
            Model::Square(_) => EngineConfig {
                mode: InferenceMode::Ep,
                damping: vec![DampingRule {
                    factor: "BoxMembership".into(),
                    target: "c".into(),
                    alpha: 0.95,
                }],
                update_order: Some(0),
                ..EngineConfig::default()
            },
            Model::Circle(_) => EngineConfig {
                linear: LinearRule::MeanField,
                ..EngineConfig::default()
            },
            _ => EngineConfig::default(),
        }
    }

    pub fn predictors(&self, graph: &FactorGraph) -> Vec<PredictorDef> {
        match self {
            Model::Circle(m) => m.predictors(graph),
            Model::Square(m) => m.predictors(graph),
            Model::Face(m) => m.predictors(graph),
            Model::Chain(_) => Vec::new(),
        }
    }

    /// Variables whose beliefs the metrics read.
    pub fn tracked(&self, graph: &FactorGraph) -> Vec<usize> {
        let names: &[&str] = match self {
            Model::Circle(_) => &["c", "r"],
            Model::Square(_) => &["c", "l", "fg", "bg"],
            Model::Face(_) => &["l", "r"],
            Model::Chain(_) => &["y1", "y2", "y3", "d1", "d2"],
        };
        names.iter().flat_map(|n| graph.variables_named(n)).collect()
    }

    pub fn metric_names(&self) -> &'static [&'static str] {
        match self {
            Model::Circle(_) => &["centerError", "radiusError"],
            Model::Square(_) => &["centerError", "sideLengthError", "colourError"],
            Model::Face(_) => &["lightAngleError", "reflectanceRmse"],
            Model::Chain(_) => &["y3Error"],
        }
    }

    /// Errors of posterior means against the sample's latents. `belief`
    /// returns the current message for a variable index.
    pub fn metrics(
        &self,
        graph: &FactorGraph,
        belief: &dyn Fn(usize) -> Option<Message>,
        sample: &Sample,
    ) -> Result<MetricValues, ModelError> {
        let mean = |name: &str| -> Result<Vec<f64>, ModelError> {
            let i = graph
                .index_of(name)
                .ok_or_else(|| ModelError::MissingBelief(name.to_string()))?;
            belief(i)
                .and_then(|m| m.mean())
                .ok_or_else(|| ModelError::MissingBelief(name.to_string()))
        };
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        Ok(match self {
            Model::Circle(_) => vec![
                ("centerError", dist(&mean("c")?, sample.latent("c")?)),
                ("radiusError", dist(&mean("r")?, sample.latent("r")?)),
            ],
            Model::Square(_) => {
                let colour = [mean("fg")?[0], mean("bg")?[0]];
                let truth = [sample.latent("fg")?[0], sample.latent("bg")?[0]];
                vec![
                    ("centerError", dist(&mean("c")?, sample.latent("c")?)),
                    ("sideLengthError", dist(&mean("l")?, sample.latent("l")?)),
                    ("colourError", dist(&colour, &truth)),
                ]
            }
            Model::Face(_) => {
                let angle = light_angle(&mean("l")?, sample.latent("l")?);
                let mut se = 0.0;
                let rs = graph.variables_named("r");
                for &i in &rs {
                    let id = &graph.variables[i].id;
                    let est = belief(i)
                        .and_then(|m| m.scalar_mean())
                        .ok_or_else(|| ModelError::MissingBelief(id.clone()))?;
                    se += (est - sample.latent(id)?[0]).powi(2);
                }
                vec![
                    ("lightAngleError", angle),
                    ("reflectanceRmse", (se / rs.len() as f64).sqrt()),
                ]
            }
            Model::Chain(_) => vec![("y3Error", dist(&mean("y3")?, sample.latent("y3")?))],
        })
    }
}

/// Angle between two directions, in radians.
pub fn light_angle(est: &[f64], truth: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (a, b) = (norm(est), norm(truth));
    if a == 0.0 || b == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let cos = est.iter().zip(truth).map(|(x, y)| x * y).sum::<f64>() / (a * b);
    cos.clamp(-1.0, 1.0).acos()
}

/// Writes an image as a binary PGM, mapping `[lo, hi]` to `[0, 255]`.
pub fn write_pgm(
    path: &std::path::Path,
    width: usize,
    height: usize,
    pixels: &[f64],
) -> std::io::Result<()> {
    let lo = pixels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(
        pixels
            .iter()
            .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    std::fs::write(path, bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn light_angle_examples() {
        assert!((light_angle(&[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0]) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(light_angle(&[0.0, 0.0, 2.0], &[0.0, 0.0, 1.0]).abs() < 1e-12);
    }

    #[test]
    fn spec_round_trips_through_json() {
        for kind in [ModelKind::Circle, ModelKind::Square, ModelKind::Face, ModelKind::Chain] {
            let model = Model::from_spec(&ModelSpec::new(kind)).unwrap();
            let spec = model.to_spec(3);
            let text = serde_json::to_string(&spec).unwrap();
            let back: ModelSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(Model::from_spec(&back).unwrap(), model);
        }
    }

    #[test]
    fn unknown_prior_is_rejected() {
        let mut spec = ModelSpec::new(ModelKind::Circle);
        spec.priors.insert("q".into(), PriorSpec::new(&[0.0], 1.0));
        assert!(Model::from_spec(&spec).is_err());
    }
}
