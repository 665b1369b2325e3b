//! Three-layer linear-Gaussian chain with a closed-form posterior.
//!
//! `y2 = y3 + d2`, `y1 = y2 + d1`, and each observation `x[k] = y1 + noise`.
//! Layers: `x[k]` (0), `y1` (1), `y2` and `d1` (2), `y3` and `d2` (3).

use std::collections::BTreeMap;

use super::{Dimensions, Draws, ModelError, ModelKind, ModelSpec, PriorSpec, Sample};
use crate::expfam::Family;
use crate::factors::FactorKind;
use crate::graph::{FactorGraph, GraphBuilder};

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub observations: usize,
    pub noise_variance: f64,
    pub top: PriorSpec,
    pub upper_offset: PriorSpec,
    pub lower_offset: PriorSpec,
}

impl ChainSpec {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self, ModelError> {
        spec.check_keys(&["y3", "d1", "d2"], &["x"])?;
        let observations = spec.dimensions.points.unwrap_or(5);
        if observations == 0 {
            return Err(ModelError::Spec("the chain needs an observation".into()));
        }
        Ok(ChainSpec {
            observations,
            noise_variance: spec.noise("x", 0.5)?,
            top: spec.prior("y3", PriorSpec::new(&[1.0], 2.0), 1)?,
            upper_offset: spec.prior("d2", PriorSpec::new(&[-0.3], 0.5), 1)?,
            lower_offset: spec.prior("d1", PriorSpec::new(&[0.5], 1.0), 1)?,
        })
    }

    pub fn to_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(ModelKind::Chain);
        spec.dimensions = Dimensions {
            points: Some(self.observations),
            ..Dimensions::default()
        };
        spec.priors.insert("y3".into(), self.top.clone());
        spec.priors.insert("d2".into(), self.upper_offset.clone());
        spec.priors.insert("d1".into(), self.lower_offset.clone());
        spec.noise_variances.insert("x".into(), self.noise_variance);
        spec
    }

    pub fn build_graph(&self) -> FactorGraph {
        let g = Family::Gaussian;
        let mut b = GraphBuilder::new();
        b.variable("y1", g, 1, false).expect("fresh id");
        b.variable("y2", g, 2, false).expect("fresh id");
        b.variable("d1", g, 2, false).expect("fresh id");
        b.variable("y3", g, 3, false).expect("fresh id");
        b.variable("d2", g, 3, false).expect("fresh id");
        for k in 0..self.observations {
            let x = format!("x[{k}]");
            b.observable(x.clone(), g).expect("fresh id");
            let noise = FactorKind::GaussianNoise {
                variance: self.noise_variance,
            };
            b.factor(format!("noise[{k}]"), noise, &[&x, "y1"]).expect("valid factor");
        }
        b.factor("sum.lower", FactorKind::Sum, &["y1", "y2", "d1"]).expect("valid factor");
        b.factor("sum.upper", FactorKind::Sum, &["y2", "y3", "d2"]).expect("valid factor");
        for (name, prior) in [
            ("y3", &self.top),
            ("d2", &self.upper_offset),
            ("d1", &self.lower_offset),
        ] {
            let kind = FactorKind::Prior {
                message: prior.message(),
            };
            b.factor(format!("prior.{name}"), kind, &[name]).expect("valid factor");
        }
        b.build()
    }

    pub fn sample(&self, seed: u64) -> Sample {
        let mut rng = Draws::new(seed);
        let y3 = rng.prior(&self.top, 0);
        let d2 = rng.prior(&self.upper_offset, 0);
        let d1 = rng.prior(&self.lower_offset, 0);
        let y2 = y3 + d2;
        let y1 = y2 + d1;
        let sd = self.noise_variance.sqrt();
        let observations = (0..self.observations)
            .map(|k| (format!("x[{k}]"), vec![y1 + sd * rng.normal()]))
            .collect();
        let latents: BTreeMap<String, Vec<f64>> = [("y1", y1), ("y2", y2), ("y3", y3), ("d1", d1), ("d2", d2)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), vec![v]))
            .collect();
        Sample {
            seed,
            latents,
            observations,
        }
    }
}
