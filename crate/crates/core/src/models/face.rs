//! Lambertian image formation: `x = (n · l) r + noise`.
//!
//! Layers: `x[i][j]` (0), `z[i][j]` (1), shading `s[i][j]` and reflectance
//! `r[i][j]` (2), normals `n[i][j]` and the light `l` (3). Reflectances of
//! mirrored pixels `(i, j)` and `(i, width-1-j)` are softly tied, as are
//! normals after flipping their horizontal component.
//!
//! The normal prior mean at a pixel is a dome: with `(u, v)` the pixel
//! centre mapped to `[-1, 1]²` and `m` the configured mean, it is
//! `(m₀u, m₁v, m₂)` normalized. A mean of `(0, 0, 1)` gives a flat template.

use std::collections::BTreeMap;

use super::{Dimensions, Draws, Featurizer, ModelError, ModelKind, ModelSpec, PredictorDef, PriorSpec, Sample};
use crate::expfam::{Family, Message, MvGaussian};
use crate::factors::{FactorKind, DETERMINISTIC_NOISE};
use crate::graph::{FactorGraph, GraphBuilder};

#[derive(Clone, Debug, PartialEq)]
pub struct FaceSpec {
    pub width: usize,
    pub height: usize,
    pub noise_variance: f64,
    pub reflectance: PriorSpec,
    pub normal: PriorSpec,
    pub light: PriorSpec,
    pub symmetry_variance: f64,
    /// Reflectance training rows drawn per problem.
    pub rows_per_problem: usize,
}

impl FaceSpec {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self, ModelError> {
        spec.check_keys(&["r", "n", "l"], &["x"])?;
        let width = spec.dimensions.width.unwrap_or(16);
        let height = spec.dimensions.height.unwrap_or(width);
        if width < 2 || width % 2 != 0 || height < 1 {
            return Err(ModelError::Spec("face width must be even and at least 2".into()));
        }
        let normal = spec.prior("n", PriorSpec::new(&[0.6, 0.6, 1.0], 0.04), 3)?;
        if normal.mean[2] <= 0.0 {
            return Err(ModelError::Spec("normal prior must face the viewer".into()));
        }
        let symmetry_variance = spec.symmetry_variance.unwrap_or(0.01);
        if !(symmetry_variance > 0.0 && symmetry_variance.is_finite()) {
            return Err(ModelError::Spec("symmetry variance must be positive".into()));
        }
        Ok(FaceSpec {
            width,
            height,
            noise_variance: spec.noise("x", 0.001)?,
            reflectance: spec.prior("r", PriorSpec::new(&[0.5], 0.04), 1)?,
            normal,
            light: spec.prior("l", PriorSpec::new(&[0.0, 0.0, 1.0], 0.25), 3)?,
            symmetry_variance,
            rows_per_problem: 16,
        })
    }

    pub fn to_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(ModelKind::Face);
        spec.dimensions = Dimensions {
            width: Some(self.width),
            height: Some(self.height),
            ..Dimensions::default()
        };
        spec.priors.insert("r".into(), self.reflectance.clone());
        spec.priors.insert("n".into(), self.normal.clone());
        spec.priors.insert("l".into(), self.light.clone());
        spec.noise_variances.insert("x".into(), self.noise_variance);
        spec.symmetry_variance = Some(self.symmetry_variance);
        spec
    }

    /// Unit prior mean of the normal at pixel `(i, j)`.
    pub fn template_normal(&self, i: usize, j: usize) -> [f64; 3] {
        let u = (j as f64 + 0.5) / self.width as f64 * 2.0 - 1.0;
        let v = (i as f64 + 0.5) / self.height as f64 * 2.0 - 1.0;
        let m = &self.normal.mean;
        normalize([m[0] * u, m[1] * v, m[2]])
    }

    pub fn build_graph(&self) -> FactorGraph {
        let mut b = GraphBuilder::new();
        let l = b.variable("l", Family::MvGaussian(3), 3, true).expect("fresh id");
        let mut r = vec![vec![0; self.width]; self.height];
        let mut n = vec![vec![0; self.width]; self.height];
        for i in 0..self.height {
            for j in 0..self.width {
                let x = b.observable(format!("x[{i}][{j}]"), Family::Gaussian).expect("fresh id");
                let z = b.variable(format!("z[{i}][{j}]"), Family::Gaussian, 1, false).expect("fresh id");
                let s = b.variable(format!("s[{i}][{j}]"), Family::Gaussian, 2, false).expect("fresh id");
                r[i][j] = b.variable(format!("r[{i}][{j}]"), Family::Gaussian, 2, false).expect("fresh id");
                n[i][j] = b
                    .variable(format!("n[{i}][{j}]"), Family::MvGaussian(3), 3, false)
                    .expect("fresh id");
                let noise = FactorKind::GaussianNoise {
                    variance: self.noise_variance,
                };
                b.factor_by_index(format!("noise[{i}][{j}]"), noise, vec![x, z]).expect("valid factor");
                let product = FactorKind::Product {
                    variance: DETERMINISTIC_NOISE,
                };
                b.factor_by_index(format!("product[{i}][{j}]"), product, vec![z, s, r[i][j]])
                    .expect("valid factor");
                let shading = FactorKind::InnerProduct {
                    variance: DETERMINISTIC_NOISE,
                };
                b.factor_by_index(format!("shading[{i}][{j}]"), shading, vec![s, n[i][j], l])
                    .expect("valid factor");
                let prior_r = FactorKind::Prior {
                    message: self.reflectance.message(),
                };
                b.factor_by_index(format!("prior.r[{i}][{j}]"), prior_r, vec![r[i][j]])
                    .expect("valid factor");
                let prior_n = FactorKind::Prior {
                    message: Message::MvGaussian(MvGaussian::isotropic(
                        &self.template_normal(i, j),
                        self.normal.variance,
                    )),
                };
                b.factor_by_index(format!("prior.n[{i}][{j}]"), prior_n, vec![n[i][j]])
                    .expect("valid factor");
            }
        }
        for i in 0..self.height {
            for j in 0..self.width / 2 {
                let m = self.width - 1 - j;
                let soft = FactorKind::SoftSymmetry {
                    variance: self.symmetry_variance,
                };
                b.factor_by_index(format!("symmetry.r[{i}][{j}]"), soft, vec![r[i][j], r[i][m]])
                    .expect("valid factor");
                let mirror = FactorKind::MirrorSymmetry {
                    variance: self.symmetry_variance,
                    axis: 0,
                };
                b.factor_by_index(format!("symmetry.n[{i}][{j}]"), mirror, vec![n[i][j], n[i][m]])
                    .expect("valid factor");
            }
        }
        let prior_l = FactorKind::Prior {
            message: self.light.message(),
        };
        b.factor_by_index("prior.l", prior_l, vec![l]).expect("valid factor");
        b.build()
    }

    /// Draws `(a, b)` with both marginals `N(mean, variance)` under a soft
    /// tie `a - b ~ N(0, tie)`.
    fn tied_pair(rng: &mut Draws, mean: f64, variance: f64, tie: f64) -> (f64, f64) {
        let sum = variance.sqrt() * rng.normal();
        let diff = (1.0 / (1.0 / variance + 2.0 / tie)).sqrt() * rng.normal();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        (mean + h * (sum + diff), mean + h * (sum - diff))
    }

    pub fn sample(&self, seed: u64) -> Sample {
        let mut rng = Draws::new(seed);
        let light = [
            rng.prior(&self.light, 0),
            rng.prior(&self.light, 1),
            rng.prior(&self.light, 2),
        ];
        let (w, h) = (self.width, self.height);
        let mut r = vec![vec![0.0; w]; h];
        let mut n = vec![vec![[0.0; 3]; w]; h];
        let tau = self.reflectance.variance;
        let tie = self.symmetry_variance;
        for i in 0..h {
            for j in 0..w / 2 {
                let m = w - 1 - j;
                let (a, b) = Self::tied_pair(&mut rng, self.reflectance.mean[0], tau, tie);
                r[i][j] = a;
                r[i][m] = b;
                let t = self.template_normal(i, j);
                let mut left = [0.0; 3];
                let mut right = [0.0; 3];
                for k in 0..3 {
                    let (a, b) = Self::tied_pair(&mut rng, t[k], self.normal.variance, tie);
                    left[k] = a;
                    right[k] = if k == 0 { -b } else { b };
                }
                n[i][j] = normalize(left);
                n[i][m] = normalize(right);
            }
        }
        let sd = self.noise_variance.sqrt();
        let mut latents = BTreeMap::new();
        let mut observations = BTreeMap::new();
        for i in 0..h {
            for j in 0..w {
                let s: f64 = n[i][j].iter().zip(&light).map(|(a, b)| a * b).sum();
                let z = s * r[i][j];
                latents.insert(format!("r[{i}][{j}]"), vec![r[i][j]]);
                latents.insert(format!("n[{i}][{j}]"), n[i][j].to_vec());
                latents.insert(format!("s[{i}][{j}]"), vec![s]);
                latents.insert(format!("z[{i}][{j}]"), vec![z]);
                observations.insert(format!("x[{i}][{j}]"), vec![z + sd * rng.normal()]);
            }
        }
        latents.insert("l".into(), light.to_vec());
        Sample {
            seed,
            latents,
            observations,
        }
    }

    /// Side of the square patch read by the reflectance featurizer.
    pub fn patch_radius(&self) -> usize {
        ((self.width as f64 * 10.0 / 96.0).round() as usize).max(1)
    }

    /// Blocks per side of the light featurizer grid.
    pub fn light_blocks(&self) -> usize {
        (self.width / 4).clamp(1, 12)
    }

    pub fn predictors(&self, graph: &FactorGraph) -> Vec<PredictorDef> {
        vec![
            PredictorDef {
                name: "r".into(),
                stage: 1,
                targets: graph.variables_named("r"),
                context: graph.variables_named("z"),
                featurizer: Featurizer::Reflectance {
                    width: self.width,
                    height: self.height,
                    radius: self.patch_radius(),
                },
                report_only: false,
                rows_per_problem: Some(self.rows_per_problem),
            },
            PredictorDef {
                name: "l".into(),
                stage: 2,
                targets: graph.variables_named("l"),
                context: graph.variables_named("s"),
                featurizer: Featurizer::Light {
                    width: self.width,
                    height: self.height,
                    blocks: self.light_blocks(),
                },
                report_only: false,
                rows_per_problem: None,
            },
        ]
    }

    pub fn image(&self, sample: &Sample) -> Vec<f64> {
        (0..self.height)
            .flat_map(|i| (0..self.width).map(move |j| (i, j)))
            .map(|(i, j)| sample.observations[&format!("x[{i}][{j}]")][0])
            .collect()
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n == 0.0 {
        [0.0, 0.0, 1.0]
    } else {
        [v[0] / n, v[1] / n, v[2] / n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> FaceSpec {
        FaceSpec::from_spec(&ModelSpec::new(ModelKind::Face)).unwrap()
    }

    #[test]
    fn graph_shape() {
        let g = spec().build_graph();
        for name in ["x", "z", "s", "r", "n"] {
            assert_eq!(g.variables_named(name).len(), 256);
        }
        let sym = g.factors.iter().filter(|f| f.id == "symmetry.r[3][5]").count();
        assert_eq!(sym, 1);
        let f = g.factors.iter().find(|f| f.id == "symmetry.r[3][5]").unwrap();
        assert_eq!(g.variables[f.vars[1]].id, "r[3][10]");
        g.validate().unwrap();
    }

    #[test]
    fn template_is_mirror_symmetric() {
        let m = spec();
        let a = m.template_normal(2, 3);
        let b = m.template_normal(2, m.width - 4);
        assert!((a[0] + b[0]).abs() < 1e-15 && a[1] == b[1] && a[2] == b[2]);
    }

    #[test]
    fn sample_follows_image_formation() {
        let s = spec().sample(9);
        let l = s.latent("l").unwrap();
        for i in [0, 7, 15] {
            let n = s.latent(&format!("n[{i}][4]")).unwrap();
            let shade: f64 = n.iter().zip(l).map(|(a, b)| a * b).sum();
            let r = s.latent(&format!("r[{i}][4]")).unwrap()[0];
            assert!((s.latent(&format!("z[{i}][4]")).unwrap()[0] - shade * r).abs() < 1e-15);
            assert!((n.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
