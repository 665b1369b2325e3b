//! A square of unknown centre, side and colours on a noisy background.
//!
//! Layers: `x[i][j]` (0), `z[i][j]` (1), `s[i][j]` with the colours `fg`
//! and `bg` (2), the centre `c` and side `l` (3). Pixel `(i, j)` covers
//! `[j, j+1] × [i, i+1]`, so centres are `[x, y]` in pixel units.

use std::collections::BTreeMap;

use super::{Dimensions, Draws, Featurizer, ModelError, ModelKind, ModelSpec, PredictorDef, PriorSpec, Sample};
use crate::expfam::Family;
use crate::factors::{FactorKind, BOX_EDGE_WIDTH, DETERMINISTIC_NOISE};
use crate::graph::{FactorGraph, GraphBuilder};

const REDRAWS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct SquareSpec {
    pub width: usize,
    pub height: usize,
    pub noise_variance: f64,
    pub centre: PriorSpec,
    pub side: PriorSpec,
    pub foreground: PriorSpec,
    pub background: PriorSpec,
}

impl SquareSpec {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self, ModelError> {
        spec.check_keys(&["c", "l", "fg", "bg"], &["x"])?;
        let width = spec.dimensions.width.unwrap_or(16);
        let height = spec.dimensions.height.unwrap_or(width);
        if width < 2 || height < 2 {
            return Err(ModelError::Spec("images need at least 2×2 pixels".into()));
        }
        let (w, h) = (width as f64, height as f64);
        let side = spec.prior("l", PriorSpec::new(&[w / 2.0], (w / 8.0).powi(2)), 1)?;
        let sd = side.variance.sqrt();
        if side.mean[0] - 3.0 * sd <= 0.0 || side.mean[0] + 3.0 * sd > w.max(h) {
            return Err(ModelError::Spec(
                "side prior must keep its mass inside the image".into(),
            ));
        }
        Ok(SquareSpec {
            width,
            height,
            noise_variance: spec.noise("x", 0.01)?,
            centre: spec.prior("c", PriorSpec::new(&[w / 2.0, h / 2.0], (w / 4.0).powi(2)), 2)?,
            side,
            foreground: spec.prior("fg", PriorSpec::new(&[0.75], 0.01), 1)?,
            background: spec.prior("bg", PriorSpec::new(&[0.25], 0.01), 1)?,
        })
    }

    pub fn to_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(ModelKind::Square);
        spec.dimensions = Dimensions {
            width: Some(self.width),
            height: Some(self.height),
            ..Dimensions::default()
        };
        spec.priors.insert("c".into(), self.centre.clone());
        spec.priors.insert("l".into(), self.side.clone());
        spec.priors.insert("fg".into(), self.foreground.clone());
        spec.priors.insert("bg".into(), self.background.clone());
        spec.noise_variances.insert("x".into(), self.noise_variance);
        spec
    }

    pub fn pixel_centre(i: usize, j: usize) -> [f64; 2] {
        [j as f64 + 0.5, i as f64 + 0.5]
    }

    pub fn build_graph(&self) -> FactorGraph {
        let mut b = GraphBuilder::new();
        let fg = b.variable("fg", Family::Gaussian, 2, true).expect("fresh id");
        let bg = b.variable("bg", Family::Gaussian, 2, true).expect("fresh id");
        let c = b.variable("c", Family::MvGaussian(2), 3, true).expect("fresh id");
        let l = b.variable("l", Family::Gaussian, 3, true).expect("fresh id");
        for i in 0..self.height {
            for j in 0..self.width {
                let x = b.observable(format!("x[{i}][{j}]"), Family::Gaussian).expect("fresh id");
                let z = b.variable(format!("z[{i}][{j}]"), Family::Gaussian, 1, false).expect("fresh id");
                let s = b.variable(format!("s[{i}][{j}]"), Family::Bernoulli, 2, false).expect("fresh id");
                let noise = FactorKind::GaussianNoise {
                    variance: self.noise_variance,
                };
                b.factor_by_index(format!("noise[{i}][{j}]"), noise, vec![x, z]).expect("valid factor");
                let gate = FactorKind::Gate {
                    variance: DETERMINISTIC_NOISE,
                };
                b.factor_by_index(format!("gate[{i}][{j}]"), gate, vec![z, s, fg, bg])
                    .expect("valid factor");
                let square = FactorKind::BoxMembership {
                    pixel: Self::pixel_centre(i, j),
                    edge_width: BOX_EDGE_WIDTH,
                };
                b.factor_by_index(format!("square[{i}][{j}]"), square, vec![s, c, l])
                    .expect("valid factor");
            }
        }
        for (name, idx, prior) in [
            ("fg", fg, &self.foreground),
            ("bg", bg, &self.background),
            ("c", c, &self.centre),
            ("l", l, &self.side),
        ] {
            let kind = FactorKind::Prior {
                message: prior.message(),
            };
            b.factor_by_index(format!("prior.{name}"), kind, vec![idx]).expect("valid factor");
        }
        b.build()
    }

    /// Whether pixel `(i, j)` lies inside the square.
    pub fn inside(c: [f64; 2], l: f64, i: usize, j: usize) -> bool {
        let p = Self::pixel_centre(i, j);
        (p[0] - c[0]).abs() <= l / 2.0 && (p[1] - c[1]).abs() <= l / 2.0
    }

    pub fn sample(&self, seed: u64) -> Result<Sample, ModelError> {
        let mut rng = Draws::new(seed);
        let mut drawn = None;
        for _ in 0..REDRAWS {
            let c = [rng.prior(&self.centre, 0), rng.prior(&self.centre, 1)];
            let l = rng.prior(&self.side, 0);
            let any = l > 0.0
                && (0..self.height).any(|i| (0..self.width).any(|j| Self::inside(c, l, i, j)));
            if any {
                drawn = Some((c, l));
                break;
            }
        }
        let (c, l) = drawn.ok_or(ModelError::Sampling(REDRAWS))?;
        let fg = rng.prior(&self.foreground, 0);
        let bg = rng.prior(&self.background, 0);
        let sd = self.noise_variance.sqrt();
        let mut latents = BTreeMap::new();
        let mut observations = BTreeMap::new();
        for i in 0..self.height {
            for j in 0..self.width {
                let s = Self::inside(c, l, i, j);
                let z = if s { fg } else { bg };
                latents.insert(format!("s[{i}][{j}]"), vec![if s { 1.0 } else { 0.0 }]);
                latents.insert(format!("z[{i}][{j}]"), vec![z]);
                observations.insert(format!("x[{i}][{j}]"), vec![z + sd * rng.normal()]);
            }
        }
        latents.insert("c".into(), c.to_vec());
        latents.insert("l".into(), vec![l]);
        latents.insert("fg".into(), vec![fg]);
        latents.insert("bg".into(), vec![bg]);
        Ok(Sample {
            seed,
            latents,
            observations,
        })
    }

    pub fn predictors(&self, graph: &FactorGraph) -> Vec<PredictorDef> {
        let (width, height) = (self.width, self.height);
        let def = |name: &str, stage, context: &str, featurizer, report_only| PredictorDef {
            name: name.into(),
            stage,
            targets: graph.variables_named(name),
            context: graph.variables_named(context),
            featurizer,
            report_only,
            rows_per_problem: None,
        };
        vec![
            def("fg", 1, "z", Featurizer::SquareColour { width, height }, false),
            def("bg", 1, "z", Featurizer::SquareColour { width, height }, false),
            def("l", 2, "s", Featurizer::SideLength { width, height }, false),
            def("c", 2, "s", Featurizer::SquareCentre { width, height }, true),
        ]
    }

    /// Observed intensities in row-major order.
    pub fn image(&self, sample: &Sample) -> Vec<f64> {
        (0..self.height)
            .flat_map(|i| (0..self.width).map(move |j| (i, j)))
            .map(|(i, j)| sample.observations[&format!("x[{i}][{j}]")][0])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SquareSpec {
        SquareSpec::from_spec(&ModelSpec::new(ModelKind::Square)).unwrap()
    }

    #[test]
    fn graph_shape() {
        let g = spec().build_graph();
        for name in ["x", "z", "s"] {
            assert_eq!(g.variables_named(name).len(), 256);
        }
        for name in ["c", "l", "fg", "bg"] {
            assert!(g.variable(name).unwrap().global);
        }
        g.validate().unwrap();
    }

    #[test]
    fn centre_pixel_takes_foreground() {
        let m = spec();
        let s = m.sample(11).unwrap();
        let c = s.latent("c").unwrap();
        let (i, j) = (c[1].floor() as usize, c[0].floor() as usize);
        if i < m.height && j < m.width {
            assert_eq!(s.latents[&format!("s[{i}][{j}]")], vec![1.0]);
            assert_eq!(s.latents[&format!("z[{i}][{j}]")], s.latents["fg"]);
        }
    }
}
