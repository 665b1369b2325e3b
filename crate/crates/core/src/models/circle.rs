//! Noisy points on a circle of unknown centre and radius.
//!
//! Layers: `x[i]` (0), `z[i]` (1), `p[i]` and the centre `c` (2), the
//! angles `a[i]` and the radius `r` (3). `z = p + c` and
//! `p = (r sin a, r cos a)`.

use std::collections::BTreeMap;

use super::{Dimensions, Draws, Featurizer, ModelError, ModelKind, ModelSpec, PredictorDef, PriorSpec, Sample};
use crate::expfam::Family;
use crate::factors::{FactorKind, DETERMINISTIC_NOISE};
use crate::graph::{FactorGraph, GraphBuilder};

const RADIUS_REDRAWS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct CircleSpec {
    pub points: usize,
    pub noise_variance: f64,
    pub centre: PriorSpec,
    pub radius: PriorSpec,
    pub angle: PriorSpec,
}

impl CircleSpec {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self, ModelError> {
        spec.check_keys(&["c", "r", "a"], &["x"])?;
        let points = spec.dimensions.points.unwrap_or(10);
        if points < 3 {
            return Err(ModelError::Spec("a circle needs at least 3 points".into()));
        }
        Ok(CircleSpec {
            points,
            noise_variance: spec.noise("x", 0.01)?,
            centre: spec.prior("c", PriorSpec::new(&[0.0, 0.0], 1.0), 2)?,
            radius: spec.prior("r", PriorSpec::new(&[1.0], 0.0625), 1)?,
            angle: spec.prior("a", PriorSpec::new(&[0.0], 100.0), 1)?,
        })
    }

    pub fn to_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(ModelKind::Circle);
        spec.dimensions = Dimensions {
            points: Some(self.points),
            ..Dimensions::default()
        };
        spec.priors.insert("c".into(), self.centre.clone());
        spec.priors.insert("r".into(), self.radius.clone());
        spec.priors.insert("a".into(), self.angle.clone());
        spec.noise_variances.insert("x".into(), self.noise_variance);
        spec
    }

    pub fn build_graph(&self) -> FactorGraph {
        let mut b = GraphBuilder::new();
        let v2 = Family::MvGaussian(2);
        let c = b.variable("c", v2, 2, true).expect("fresh id");
        let r = b.variable("r", Family::Gaussian, 3, true).expect("fresh id");
        for i in 0..self.points {
            let x = b.observable(format!("x[{i}]"), v2).expect("fresh id");
            let z = b.variable(format!("z[{i}]"), v2, 1, false).expect("fresh id");
            let p = b.variable(format!("p[{i}]"), v2, 2, false).expect("fresh id");
            let a = b.variable(format!("a[{i}]"), Family::Gaussian, 3, false).expect("fresh id");
            let noise = FactorKind::GaussianNoise {
                variance: self.noise_variance,
            };
            b.factor_by_index(format!("noise[{i}]"), noise, vec![x, z]).expect("valid factor");
            b.factor_by_index(format!("sum[{i}]"), FactorKind::Sum, vec![z, p, c])
                .expect("valid factor");
            let rot = FactorKind::Rotation {
                variance: DETERMINISTIC_NOISE,
            };
            b.factor_by_index(format!("rotation[{i}]"), rot, vec![p, a, r])
                .expect("valid factor");
            let prior = FactorKind::Prior {
                message: self.angle.message(),
            };
            b.factor_by_index(format!("prior.a[{i}]"), prior, vec![a]).expect("valid factor");
        }
        for (name, idx, prior) in [("c", c, &self.centre), ("r", r, &self.radius)] {
            let kind = FactorKind::Prior {
                message: prior.message(),
            };
            b.factor_by_index(format!("prior.{name}"), kind, vec![idx]).expect("valid factor");
        }
        b.build()
    }

    pub fn sample(&self, seed: u64) -> Result<Sample, ModelError> {
        let mut rng = Draws::new(seed);
        let c = [rng.prior(&self.centre, 0), rng.prior(&self.centre, 1)];
        let mut r = rng.prior(&self.radius, 0);
        let mut tries = 0;
        while r <= 0.0 {
            tries += 1;
            if tries > RADIUS_REDRAWS {
                return Err(ModelError::Sampling(RADIUS_REDRAWS));
            }
            r = rng.prior(&self.radius, 0);
        }
        let sd = self.noise_variance.sqrt();
        let mut latents = BTreeMap::new();
        let mut observations = BTreeMap::new();
        for i in 0..self.points {
            let a = rng.prior(&self.angle, 0);
            let p = [r * a.sin(), r * a.cos()];
            let z = [p[0] + c[0], p[1] + c[1]];
            let x = [z[0] + sd * rng.normal(), z[1] + sd * rng.normal()];
            latents.insert(format!("a[{i}]"), vec![a]);
            latents.insert(format!("p[{i}]"), p.to_vec());
            latents.insert(format!("z[{i}]"), z.to_vec());
            observations.insert(format!("x[{i}]"), x.to_vec());
        }
        latents.insert("c".into(), c.to_vec());
        latents.insert("r".into(), vec![r]);
        Ok(Sample {
            seed,
            latents,
            observations,
        })
    }

    pub fn predictors(&self, graph: &FactorGraph) -> Vec<PredictorDef> {
        vec![
            PredictorDef {
                name: "c".into(),
                stage: 1,
                targets: graph.variables_named("c"),
                context: graph.variables_named("z"),
                featurizer: Featurizer::CircleCentre,
                report_only: false,
                rows_per_problem: None,
            },
            PredictorDef {
                name: "r".into(),
                stage: 2,
                targets: graph.variables_named("r"),
                context: graph.variables_named("p"),
                featurizer: Featurizer::CircleRadius,
                report_only: true,
                rows_per_problem: None,
            },
        ]
    }
}
