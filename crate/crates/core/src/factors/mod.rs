//! Factor kinds and their outgoing-message rules.
//!
//! Every kind answers "message to edge `e` given the messages on the other
//! edges". Linear-Gaussian kinds use exact sum-product messages computed
//! from cavities by default, which makes them exact on trees in either
//! mode; [`LinearRule::MeanField`] switches them to mean-field updates in
//! VMP. Rotation
//! and box membership always moment-match a tilted distribution. The gate
//! follows the selected mode. Inner product and product are variational
//! and read beliefs.

mod bilinear;
mod box_membership;
mod gate;
pub(crate) mod linear;
pub mod quadrature;
mod rotation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expfam::{Family, Message, MessageError};

pub use box_membership::LOG_ODDS_CAP;
pub use quadrature::QuadratureSpec;

use linear::Lin;

/// Noise added to deterministic relations so that their messages exist.
pub const DETERMINISTIC_NOISE: f64 = 1e-4;

/// Default probit edge width of the box indicator, in pixels.
pub const BOX_EDGE_WIDTH: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum InferenceMode {
    Vmp,
    Ep,
}

/// How linear-Gaussian factors update under VMP. EP always uses the exact rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LinearRule {
    /// Sum-product from cavities.
    #[default]
    Exact,
    /// Mean-field: other edges enter through their belief means. A sum's
    /// output `z` is treated as deterministic, so messages to `z` push the
    /// input beliefs forward and messages to the inputs read `z`'s cavity.
    MeanField,
}

/// What a factor reads on its edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// Belief divided by this factor's own message.
    Cavity,
    /// Full belief.
    Belief,
    /// Cavity on edge 0, beliefs elsewhere.
    ChildCavity,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("family error: {0}")]
    Family(&'static str),
    #[error("improper input on edge {0}")]
    ImproperCavity(&'static str),
    #[error("tilted distribution collapsed on edge {0}")]
    Degenerate(&'static str),
    #[error(transparent)]
    Message(#[from] MessageError),
}

/// A computed message plus an optional diagnostic.
#[derive(Clone, Debug, PartialEq)]
pub struct Outgoing {
    pub message: Message,
    pub flag: Option<&'static str>,
}

impl Outgoing {
    pub fn new(message: Message) -> Self {
        Outgoing {
            message,
            flag: None,
        }
    }

    pub fn flagged(message: Message, flag: &'static str) -> Self {
        Outgoing {
            message,
            flag: Some(flag),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum FactorKind {
    /// Edges `[x, z]`: `x = z + N(0, variance·I)`.
    GaussianNoise { variance: f64 },
    /// Edges `[z, p, c]`: `z = p + c`.
    Sum,
    /// Edges `[p, a, r]`: `p = (r sin a, r cos a) + N(0, variance·I)`.
    Rotation { variance: f64 },
    /// Edges `[z, s, fg, bg]`: `z = (s ? fg : bg) + N(0, variance)`.
    Gate { variance: f64 },
    /// Edges `[s, c, l]` for a pixel centred at `pixel`.
    #[serde(rename_all = "camelCase")]
    BoxMembership { pixel: [f64; 2], edge_width: f64 },
    /// Edges `[s, n, l]`: `s = n·l + N(0, variance)`.
    InnerProduct { variance: f64 },
    /// Edges `[z, s, r]`: `z = s·r + N(0, variance)`.
    Product { variance: f64 },
    /// Edges `[a, b]`: `a - b ~ N(0, variance)`.
    SoftSymmetry { variance: f64 },
    /// Edges `[a, b]` of vectors: `a - M b ~ N(0, variance·I)`, where `M`
    /// flips the sign of coordinate `axis`.
    MirrorSymmetry { variance: f64, axis: usize },
    /// Edge `[v]`: fixed message.
    Prior { message: Message },
}

impl FactorKind {
    pub fn name(&self) -> &'static str {
        match self {
            FactorKind::GaussianNoise { .. } => "GaussianNoise",
            FactorKind::Sum => "Sum",
            FactorKind::Rotation { .. } => "Rotation",
            FactorKind::Gate { .. } => "Gate",
            FactorKind::BoxMembership { .. } => "BoxMembership",
            FactorKind::InnerProduct { .. } => "InnerProduct",
            FactorKind::Product { .. } => "Product",
            FactorKind::SoftSymmetry { .. } => "SoftSymmetry",
            FactorKind::MirrorSymmetry { .. } => "MirrorSymmetry",
            FactorKind::Prior { .. } => "Prior",
        }
    }

    pub fn roles(&self) -> &'static [&'static str] {
        match self {
            FactorKind::GaussianNoise { .. } => &["x", "z"],
            FactorKind::Sum => &["z", "p", "c"],
            FactorKind::Rotation { .. } => &["p", "a", "r"],
            FactorKind::Gate { .. } => &["z", "s", "fg", "bg"],
            FactorKind::BoxMembership { .. } => &["s", "c", "l"],
            FactorKind::InnerProduct { .. } => &["s", "n", "l"],
            FactorKind::Product { .. } => &["z", "s", "r"],
            FactorKind::SoftSymmetry { .. } | FactorKind::MirrorSymmetry { .. } => &["a", "b"],
            FactorKind::Prior { .. } => &["v"],
        }
    }

    pub fn input_kind(&self, mode: InferenceMode, linear: LinearRule) -> InputKind {
        let mean_field = mode == InferenceMode::Vmp && linear == LinearRule::MeanField;
        match self {
            FactorKind::InnerProduct { .. } | FactorKind::Product { .. } => InputKind::Belief,
            FactorKind::Gate { .. } if mode == InferenceMode::Vmp => InputKind::Belief,
            FactorKind::GaussianNoise { .. }
            | FactorKind::SoftSymmetry { .. }
            | FactorKind::MirrorSymmetry { .. }
                if mean_field =>
            {
                InputKind::Belief
            }
            FactorKind::Sum if mean_field => InputKind::ChildCavity,
            _ => InputKind::Cavity,
        }
    }

    /// Kinds whose messages to all edges come out of one shared integral.
    pub fn is_joint(&self) -> bool {
        matches!(
            self,
            FactorKind::Rotation { .. } | FactorKind::BoxMembership { .. }
        )
    }

    /// Checks edge families against the kind's signature.
    pub fn check_families(&self, families: &[Family]) -> Result<(), String> {
        let n = self.roles().len();
        if families.len() != n {
            return Err(format!(
                "{} expects {} edges, got {}",
                self.name(),
                n,
                families.len()
            ));
        }
        let bad = |why: &str| Err(format!("{}: {why} (edges {families:?})", self.name()));
        let variance_ok = |v: f64| v > 0.0 && v.is_finite();
        match self {
            FactorKind::GaussianNoise { variance } | FactorKind::SoftSymmetry { variance } => {
                if !variance_ok(*variance) {
                    return bad("variance must be positive");
                }
                if families[0] != families[1] || !families[0].is_continuous() {
                    return bad("edges must share a continuous family");
                }
            }
            FactorKind::MirrorSymmetry { variance, axis } => {
                if !variance_ok(*variance) {
                    return bad("variance must be positive");
                }
                match families[0] {
                    Family::MvGaussian(d) if families[1] == families[0] && *axis < d => {}
                    _ => return bad("edges must be vectors of one dimension covering the axis"),
                }
            }
            FactorKind::Sum => {
                if families
                    .iter()
                    .any(|f| *f != families[0] || !f.is_continuous())
                {
                    return bad("edges must share a continuous family");
                }
            }
            FactorKind::Rotation { variance } => {
                if !variance_ok(*variance) {
                    return bad("variance must be positive");
                }
                if families != [Family::MvGaussian(2), Family::Gaussian, Family::Gaussian] {
                    return bad("expected [2-D point, angle, radius]");
                }
            }
            FactorKind::Gate { variance } => {
                if !variance_ok(*variance) {
                    return bad("variance must be positive");
                }
                if families
                    != [
                        Family::Gaussian,
                        Family::Bernoulli,
                        Family::Gaussian,
                        Family::Gaussian,
                    ]
                {
                    return bad("expected [z, Bernoulli s, fg, bg] with scalar colours");
                }
            }
            FactorKind::BoxMembership { edge_width, .. } => {
                if !variance_ok(*edge_width) {
                    return bad("edge width must be positive");
                }
                if families != [Family::Bernoulli, Family::MvGaussian(2), Family::Gaussian] {
                    return bad("expected [Bernoulli s, 2-D centre, side]");
                }
            }
            FactorKind::InnerProduct { variance } => {
                if !variance_ok(*variance) {
                    return bad("variance must be positive");
                }
                if families[0] != Family::Gaussian
                    || families[1] != families[2]
                    || !matches!(families[1], Family::MvGaussian(_))
                {
                    return bad("expected [scalar, vector, vector]");
                }
            }
            FactorKind::Product { variance } => {
                if !variance_ok(*variance) {
                    return bad("variance must be positive");
                }
                if families.iter().any(|f| *f != Family::Gaussian) {
                    return bad("expected three scalars");
                }
            }
            FactorKind::Prior { message } => {
                if message.family() != families[0] {
                    return bad("prior family differs from its variable");
                }
                if !message.is_proper() {
                    return bad("prior must be proper");
                }
            }
        }
        Ok(())
    }

    /// Message to edge `target`. `inputs[i]` is the cavity or belief on
    /// edge `i`, as selected by [`FactorKind::input_kind`].
    pub fn message(
        &self,
        target: usize,
        inputs: &[Message],
        mode: InferenceMode,
        linear: LinearRule,
        quadrature: &QuadratureSpec,
    ) -> Result<Outgoing, FactorError> {
        let scalar = |i: usize| inputs[i].family() == Family::Gaussian;
        let lin = |i: usize| Lin::from_message(&inputs[i]);
        if mode == InferenceMode::Vmp && linear == LinearRule::MeanField {
            // Edges read as their belief means.
            let at_mean = |i: usize| Lin::at_mean(&inputs[i]);
            match self {
                FactorKind::GaussianNoise { variance } | FactorKind::SoftSymmetry { variance } => {
                    let out = linear::add_noise(&at_mean(1 - target)?, *variance);
                    return Ok(Outgoing::new(out.into_message(scalar(target))));
                }
                FactorKind::MirrorSymmetry { variance, axis } => {
                    let out = linear::add_noise(&at_mean(1 - target)?.reflect(*axis), *variance);
                    return Ok(Outgoing::new(out.into_message(false)));
                }
                FactorKind::Sum => {
                    let out = match target {
                        0 => linear::convolve(&lin(1)?, &lin(2)?),
                        1 => linear::convolve(&lin(0)?, &at_mean(2)?.negate()),
                        _ => linear::convolve(&lin(0)?, &at_mean(1)?.negate()),
                    };
                    return Ok(Outgoing::new(out.into_message(scalar(target))));
                }
                _ => {}
            }
        }
        match self {
            FactorKind::GaussianNoise { variance } | FactorKind::SoftSymmetry { variance } => {
                let other = 1 - target;
                let out = linear::add_noise(&lin(other)?, *variance);
                Ok(Outgoing::new(out.into_message(scalar(target))))
            }
            FactorKind::MirrorSymmetry { variance, axis } => {
                let out = linear::add_noise(&lin(1 - target)?.reflect(*axis), *variance);
                Ok(Outgoing::new(out.into_message(false)))
            }
            FactorKind::Sum => {
                let out = match target {
                    0 => linear::convolve(&lin(1)?, &lin(2)?),
                    1 => linear::convolve(&lin(0)?, &lin(2)?.negate()),
                    _ => linear::convolve(&lin(0)?, &lin(1)?.negate()),
                };
                Ok(Outgoing::new(out.into_message(scalar(target))))
            }
            FactorKind::Prior { message } => Ok(Outgoing::new(message.clone())),
            FactorKind::InnerProduct { variance } => {
                bilinear::inner_product(target, inputs, *variance)
            }
            FactorKind::Product { variance } => bilinear::product(target, inputs, *variance),
            _ => Ok(self.messages(inputs, mode, linear, quadrature)?.swap_remove(target)),
        }
    }

    /// Messages to every edge at once.
    pub fn messages(
        &self,
        inputs: &[Message],
        mode: InferenceMode,
        linear: LinearRule,
        quadrature: &QuadratureSpec,
    ) -> Result<Vec<Outgoing>, FactorError> {
        match self {
            FactorKind::Rotation { variance } => rotation::messages(inputs, *variance, quadrature),
            FactorKind::Gate { variance } => gate::messages(inputs, *variance, mode),
            FactorKind::BoxMembership { pixel, edge_width } => {
                box_membership::messages(inputs, *pixel, *edge_width, quadrature)
            }
            _ => (0..self.roles().len())
                .map(|t| self.message(t, inputs, mode, linear, quadrature))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::MvGaussian;

    const Q: QuadratureSpec = QuadratureSpec {
        nodes_per_sigma: 2.0,
        window_sigmas: 8.0,
        max_nodes: 1024,
    };

    fn mean_var(m: &Message) -> (f64, f64) {
        match m {
            Message::Gaussian(g) => (g.mean(), g.variance()),
            Message::PointMass(p) => (p.location[0], 0.0),
            other => panic!("not scalar: {other:?}"),
        }
    }

    fn send(kind: &FactorKind, target: usize, inputs: &[Message], mode: InferenceMode) -> Message {
        kind.message(target, inputs, mode, LinearRule::Exact, &Q).unwrap().message
    }

    #[test]
    fn gaussian_noise_examples() {
        let k = FactorKind::GaussianNoise { variance: 0.01 };
        let u = Message::uniform(Family::Gaussian);
        let (m, v) = mean_var(&send(
            &k,
            1,
            &[Message::scalar_point(1.3), u.clone()],
            InferenceMode::Ep,
        ));
        assert!((m - 1.3).abs() < 1e-12 && (v - 0.01).abs() < 1e-12);
        let (m, v) = mean_var(&send(
            &k,
            0,
            &[u, Message::gaussian(0.0, 1.0)],
            InferenceMode::Vmp,
        ));
        assert!(m.abs() < 1e-12 && (v - 1.01).abs() < 1e-12);
    }

    #[test]
    fn sum_examples() {
        let u2 = Message::uniform(Family::MvGaussian(2));
        let p = Message::MvGaussian(MvGaussian::isotropic(&[1.0, 1.0], 1.0));
        let c = Message::MvGaussian(MvGaussian::isotropic(&[0.5, 0.0], 1.0));
        let z = send(
            &FactorKind::Sum,
            0,
            &[u2.clone(), p.clone(), c],
            InferenceMode::Ep,
        );
        let mean = z.mean().unwrap();
        assert!((mean[0] - 1.5).abs() < 1e-12 && (mean[1] - 1.0).abs() < 1e-12);
        let var = z.variances().unwrap();
        assert!((var[0] - 2.0).abs() < 1e-12 && (var[1] - 2.0).abs() < 1e-12);

        let to_p = send(
            &FactorKind::Sum,
            1,
            &[
                Message::point_mass(vec![2.0, 0.0]),
                u2.clone(),
                Message::point_mass(vec![1.0, 0.0]),
            ],
            InferenceMode::Ep,
        );
        assert_eq!(to_p, Message::point_mass(vec![1.0, 0.0]));

        let z = send(&FactorKind::Sum, 0, &[u2.clone(), p, u2], InferenceMode::Ep);
        assert!(z.is_uniform());
    }

    #[test]
    fn soft_symmetry_examples() {
        let k = FactorKind::SoftSymmetry { variance: 0.01 };
        let u = Message::uniform(Family::Gaussian);
        let (m, v) = mean_var(&send(
            &k,
            0,
            &[u.clone(), Message::scalar_point(0.4)],
            InferenceMode::Vmp,
        ));
        assert!((m - 0.4).abs() < 1e-12 && (v - 0.01).abs() < 1e-12);
        assert!(send(&k, 0, &[u.clone(), u.clone()], InferenceMode::Vmp).is_uniform());
        let (m, v) = mean_var(&send(
            &k,
            0,
            &[u, Message::gaussian(0.4, 0.02)],
            InferenceMode::Vmp,
        ));
        assert!((m - 0.4).abs() < 1e-12 && (v - 0.03).abs() < 1e-12);
    }

    #[test]
    fn mirror_symmetry_flips_one_axis() {
        let k = FactorKind::MirrorSymmetry {
            variance: 0.01,
            axis: 0,
        };
        let out = send(
            &k,
            0,
            &[
                Message::uniform(Family::MvGaussian(3)),
                Message::point_mass(vec![0.3, 0.2, 0.9]),
            ],
            InferenceMode::Vmp,
        );
        let m = out.mean().unwrap();
        assert!((m[0] + 0.3).abs() < 1e-12 && (m[1] - 0.2).abs() < 1e-12);
        assert!((out.variances().unwrap()[2] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn rotation_point_masses() {
        let k = FactorKind::Rotation {
            variance: DETERMINISTIC_NOISE,
        };
        let u2 = Message::uniform(Family::MvGaussian(2));
        let to_p = send(
            &k,
            0,
            &[
                u2.clone(),
                Message::scalar_point(std::f64::consts::FRAC_PI_2),
                Message::scalar_point(2.0),
            ],
            InferenceMode::Ep,
        );
        let m = to_p.mean().unwrap();
        assert!((m[0] - 2.0).abs() < 1e-9 && m[1].abs() < 1e-9);
        let v = to_p.variances().unwrap();
        assert!((v[0] - DETERMINISTIC_NOISE).abs() < 1e-9);

        let to_p = send(
            &k,
            0,
            &[u2, Message::scalar_point(0.0), Message::scalar_point(1.0)],
            InferenceMode::Ep,
        );
        let m = to_p.mean().unwrap();
        assert!(m[0].abs() < 1e-9 && (m[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gate_examples() {
        let k = FactorKind::Gate {
            variance: DETERMINISTIC_NOISE,
        };
        let u = Message::uniform(Family::Gaussian);
        let out = send(
            &k,
            0,
            &[
                u.clone(),
                Message::bernoulli(1.0),
                Message::gaussian(0.8, 0.01),
                Message::gaussian(0.2, 0.01),
            ],
            InferenceMode::Ep,
        );
        let (m, v) = mean_var(&out);
        assert!((m - 0.8).abs() < 1e-12 && (v - 0.01 - DETERMINISTIC_NOISE).abs() < 1e-12);

        let to_s = send(
            &k,
            1,
            &[
                Message::gaussian(0.3, 0.1),
                Message::bernoulli(0.5),
                Message::gaussian(0.0, 1.0),
                Message::gaussian(0.0, 1.0),
            ],
            InferenceMode::Ep,
        );
        assert_eq!(to_s, Message::bernoulli(0.5));
    }

    #[test]
    fn gate_log_odds_is_density_ratio() {
        let k = FactorKind::Gate { variance: 1e-4 };
        let to_s = send(
            &k,
            1,
            &[
                Message::scalar_point(0.9),
                Message::bernoulli(0.5),
                Message::gaussian(1.0, 0.01),
                Message::gaussian(0.0, 0.01),
            ],
            InferenceMode::Ep,
        );
        let v: f64 = 0.01 + 1e-4;
        let density = |x: f64, m: f64| {
            (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
        };
        let expected = (density(0.9, 1.0) / density(0.9, 0.0)).ln();
        match to_s {
            Message::Bernoulli(b) => assert!((b.log_odds - expected).abs() < 1e-6),
            _ => unreachable!(),
        }
    }

    #[test]
    fn box_inside_and_outside() {
        let k = FactorKind::BoxMembership {
            pixel: [0.5, 0.5],
            edge_width: BOX_EDGE_WIDTH,
        };
        let inputs = [
            Message::bernoulli(0.5),
            Message::point_mass(vec![0.0, 0.0]),
            Message::scalar_point(2.0),
        ];
        match send(&k, 0, &inputs, InferenceMode::Ep) {
            Message::Bernoulli(b) => assert!(b.probability() > 1.0 - 1e-12),
            _ => unreachable!(),
        }
        let k = FactorKind::BoxMembership {
            pixel: [1.5, 0.0],
            edge_width: BOX_EDGE_WIDTH,
        };
        match send(&k, 0, &inputs, InferenceMode::Ep) {
            Message::Bernoulli(b) => assert!(b.probability() < 1e-12),
            _ => unreachable!(),
        }
    }

    #[test]
    fn product_examples() {
        let k = FactorKind::Product {
            variance: DETERMINISTIC_NOISE,
        };
        let u = Message::uniform(Family::Gaussian);
        let z = send(
            &k,
            0,
            &[
                Message::gaussian(0.0, 1.0),
                Message::scalar_point(0.5),
                Message::scalar_point(0.6),
            ],
            InferenceMode::Vmp,
        );
        assert!((mean_var(&z).0 - 0.3).abs() < 1e-12);
        let r = send(
            &k,
            2,
            &[Message::scalar_point(0.7), Message::scalar_point(1.0), u],
            InferenceMode::Vmp,
        );
        let (m, v) = mean_var(&r);
        assert!((m - 0.7).abs() < 1e-12 && (v - DETERMINISTIC_NOISE).abs() < 1e-15);
    }

    #[test]
    fn inner_product_examples() {
        let k = FactorKind::InnerProduct {
            variance: DETERMINISTIC_NOISE,
        };
        let s = send(
            &k,
            0,
            &[
                Message::gaussian(0.0, 1.0),
                Message::point_mass(vec![0.0, 0.0, 1.0]),
                Message::point_mass(vec![0.0, 0.0, 0.8]),
            ],
            InferenceMode::Vmp,
        );
        assert!((mean_var(&s).0 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn family_signatures() {
        assert!(FactorKind::Sum
            .check_families(&[Family::Gaussian, Family::Gaussian, Family::Bernoulli])
            .is_err());
        assert!(FactorKind::Rotation { variance: 1e-4 }
            .check_families(&[Family::MvGaussian(2), Family::Gaussian, Family::Gaussian])
            .is_ok());
        assert!(FactorKind::GaussianNoise { variance: 0.0 }
            .check_families(&[Family::Gaussian, Family::Gaussian])
            .is_err());
    }
}
