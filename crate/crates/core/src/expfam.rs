//! Exponential-family messages.
//!
//! Every message is stored in natural parameters so that products and
//! quotients are additions. Moment form is derived on demand. The same type
//! is used for beliefs and for messages; only beliefs are required to be
//! proper.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Variances below this collapse to a point mass.
pub const POINT_MASS_VARIANCE: f64 = 1e-12;

/// Slack allowed on precisions and eigenvalues before a message counts as improper.
pub const PRECISION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MessageError {
    #[error("family mismatch: {0} vs {1}")]
    FamilyMismatch(Family, Family),
    #[error("negative precision {0} in product")]
    NegativePrecision(f64),
    #[error("message has no finite moments")]
    NoMoments,
    #[error("invalid moments: {0}")]
    InvalidMoments(String),
    #[error("cannot average an empty list of messages")]
    EmptyAverage,
    #[error("conflicting point masses")]
    ConflictingPointMasses,
}

pub type Result<T> = std::result::Result<T, MessageError>;

/// Distribution family of a variable. Point masses belong to the continuous
/// family with matching dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "camelCase")]
pub enum Family {
    Gaussian,
    MvGaussian(usize),
    Bernoulli,
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::Gaussian | Family::Bernoulli => 1,
            Family::MvGaussian(d) => *d,
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Family::Bernoulli)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Gaussian => write!(f, "Gaussian"),
            Family::MvGaussian(d) => write!(f, "MvGaussian({d})"),
            Family::Bernoulli => write!(f, "Bernoulli"),
        }
    }
}

/// Scalar Gaussian in natural parameters: `eta1 = precision * mean`,
/// `eta2 = -precision / 2`. Both zero is the uniform message.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian {
    pub eta1: f64,
    pub eta2: f64,
}

impl Gaussian {
    pub fn uniform() -> Self {
        Gaussian {
            eta1: 0.0,
            eta2: 0.0,
        }
    }

    pub fn from_natural(eta1: f64, eta2: f64) -> Self {
        Gaussian { eta1, eta2 }
    }

    /// Infinite variance gives the uniform message.
    pub fn from_mean_variance(mean: f64, variance: f64) -> Self {
        if variance.is_infinite() {
            return Self::uniform();
        }
        Self::from_mean_precision(mean, 1.0 / variance)
    }

    pub fn from_mean_precision(mean: f64, precision: f64) -> Self {
        Gaussian {
            eta1: precision * mean,
            eta2: -0.5 * precision,
        }
    }

    pub fn precision(&self) -> f64 {
        -2.0 * self.eta2
    }

    pub fn mean(&self) -> f64 {
        self.eta1 / self.precision()
    }

    pub fn variance(&self) -> f64 {
        1.0 / self.precision()
    }

    pub fn is_uniform(&self) -> bool {
        self.eta1 == 0.0 && self.eta2 == 0.0
    }

    pub fn is_proper(&self) -> bool {
        self.precision() > 0.0 && self.precision().is_finite() && self.eta1.is_finite()
    }
}

/// Multivariate Gaussian in information form: `h = K mean`, `K` the precision.
#[derive(Clone, Debug, PartialEq)]
pub struct MvGaussian {
    pub h: DVector<f64>,
    pub k: DMatrix<f64>,
}

impl MvGaussian {
    pub fn uniform(dim: usize) -> Self {
        MvGaussian {
            h: DVector::zeros(dim),
            k: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_information(h: DVector<f64>, k: DMatrix<f64>) -> Self {
        MvGaussian { h, k }
    }

    /// Panics if `covariance` is not positive definite.
    pub fn from_mean_covariance(mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Self {
        let k = covariance
            .clone()
            .cholesky()
            .expect("covariance must be positive definite")
            .inverse();
        let h = &k * mean;
        MvGaussian { h, k }
    }

    pub fn isotropic(mean: &[f64], variance: f64) -> Self {
        let d = mean.len();
        let k = DMatrix::identity(d, d) / variance;
        let h = DVector::from_column_slice(mean) / variance;
        MvGaussian { h, k }
    }

    /// Independent axes with the given variances.
    pub fn diagonal(mean: &[f64], variances: &[f64]) -> Self {
        let d = mean.len();
        let mut k = DMatrix::zeros(d, d);
        let mut h = DVector::zeros(d);
        for i in 0..d {
            k[(i, i)] = 1.0 / variances[i];
            h[i] = mean[i] / variances[i];
        }
        MvGaussian { h, k }
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn is_uniform(&self) -> bool {
        self.h.iter().all(|v| *v == 0.0) && self.k.iter().all(|v| *v == 0.0)
    }

    pub fn is_proper(&self) -> bool {
        self.h.iter().all(|v| v.is_finite())
            && self.k.iter().all(|v| v.is_finite())
            && self.k.clone().cholesky().is_some()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.k + self.k.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        self.k.clone().cholesky().map(|c| c.inverse())
    }

    pub fn mean(&self) -> Option<DVector<f64>> {
        self.k.clone().cholesky().map(|c| c.solve(&self.h))
    }
}

/// Bernoulli message stored as log-odds; infinite log-odds are certain outcomes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bernoulli {
    pub log_odds: f64,
}

impl Bernoulli {
    pub fn uniform() -> Self {
        Bernoulli { log_odds: 0.0 }
    }

    pub fn from_log_odds(log_odds: f64) -> Self {
        Bernoulli { log_odds }
    }

    pub fn from_probability(p: f64) -> Self {
        Bernoulli { log_odds: logit(p) }
    }

    pub fn probability(&self) -> f64 {
        sigmoid(self.log_odds)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        (p / (1.0 - p)).ln()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointMass {
    pub location: Vec<f64>,
}

/// First two raw moments of a message.
#[derive(Clone, Debug, PartialEq)]
pub enum Moments {
    Scalar {
        mean: f64,
        second: f64,
    },
    Vector {
        mean: DVector<f64>,
        second: DMatrix<f64>,
    },
    Probability(f64),
}

impl Moments {
    fn add_scaled(&mut self, other: &Moments, scale: f64) -> Result<()> {
        match (self, other) {
            (Moments::Scalar { mean, second }, Moments::Scalar { mean: m, second: s }) => {
                *mean += scale * m;
                *second += scale * s;
            }
            (Moments::Vector { mean, second }, Moments::Vector { mean: m, second: s })
                if mean.len() == m.len() =>
            {
                *mean += m * scale;
                *second += s * scale;
            }
            (Moments::Probability(p), Moments::Probability(q)) => *p += scale * q,
            _ => return Err(MessageError::InvalidMoments("mixed moment kinds".into())),
        }
        Ok(())
    }

    fn scale(&mut self, s: f64) {
        match self {
            Moments::Scalar { mean, second } => {
                *mean *= s;
                *second *= s;
            }
            Moments::Vector { mean, second } => {
                *mean *= s;
                *second *= s;
            }
            Moments::Probability(p) => *p *= s,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Gaussian(Gaussian),
    MvGaussian(MvGaussian),
    Bernoulli(Bernoulli),
    PointMass(PointMass),
}

impl From<Gaussian> for Message {
    fn from(g: Gaussian) -> Self {
        Message::Gaussian(g)
    }
}

impl From<MvGaussian> for Message {
    fn from(g: MvGaussian) -> Self {
        Message::MvGaussian(g)
    }
}

impl From<Bernoulli> for Message {
    fn from(b: Bernoulli) -> Self {
        Message::Bernoulli(b)
    }
}

impl Message {
    pub fn gaussian(mean: f64, variance: f64) -> Self {
        Message::Gaussian(Gaussian::from_mean_variance(mean, variance))
    }

    pub fn bernoulli(p: f64) -> Self {
        Message::Bernoulli(Bernoulli::from_probability(p))
    }

    pub fn point_mass(location: Vec<f64>) -> Self {
        Message::PointMass(PointMass { location })
    }

    pub fn scalar_point(x: f64) -> Self {
        Message::point_mass(vec![x])
    }

    pub fn uniform(family: Family) -> Self {
        match family {
            Family::Gaussian => Message::Gaussian(Gaussian::uniform()),
            Family::MvGaussian(d) => Message::MvGaussian(MvGaussian::uniform(d)),
            Family::Bernoulli => Message::Bernoulli(Bernoulli::uniform()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Message::Gaussian(_) => Family::Gaussian,
            Message::MvGaussian(g) => Family::MvGaussian(g.dim()),
            Message::Bernoulli(_) => Family::Bernoulli,
            Message::PointMass(p) if p.location.len() == 1 => Family::Gaussian,
            Message::PointMass(p) => Family::MvGaussian(p.location.len()),
        }
    }

    pub fn dim(&self) -> usize {
        self.family().dim()
    }

    pub fn is_point_mass(&self) -> bool {
        match self {
            Message::PointMass(_) => true,
            Message::Bernoulli(b) => b.log_odds.is_infinite(),
            _ => false,
        }
    }

    pub fn is_uniform(&self) -> bool {
        match self {
            Message::Gaussian(g) => g.is_uniform(),
            Message::MvGaussian(g) => g.is_uniform(),
            Message::Bernoulli(b) => b.log_odds == 0.0,
            Message::PointMass(_) => false,
        }
    }

    /// Normalizable density or point mass with finite parameters.
    pub fn is_proper(&self) -> bool {
        match self {
            Message::Gaussian(g) => g.is_proper(),
            Message::MvGaussian(g) => g.is_proper(),
            Message::Bernoulli(b) => !b.log_odds.is_nan(),
            Message::PointMass(p) => p.location.iter().all(|v| v.is_finite()),
        }
    }

    /// True when every natural parameter is finite (Bernoulli certainty excepted).
    pub fn is_finite(&self) -> bool {
        match self {
            Message::Gaussian(g) => g.eta1.is_finite() && g.eta2.is_finite(),
            Message::MvGaussian(g) => {
                g.h.iter().all(|v| v.is_finite()) && g.k.iter().all(|v| v.is_finite())
            }
            Message::Bernoulli(b) => !b.log_odds.is_nan(),
            Message::PointMass(p) => p.location.iter().all(|v| v.is_finite()),
        }
    }

    /// Mean vector of a proper message (probability for Bernoulli).
    pub fn mean(&self) -> Option<Vec<f64>> {
        match self.moments().ok()? {
            Moments::Scalar { mean, .. } => Some(vec![mean]),
            Moments::Vector { mean, .. } => Some(mean.iter().copied().collect()),
            Moments::Probability(p) => Some(vec![p]),
        }
    }

    pub fn scalar_mean(&self) -> Option<f64> {
        self.mean().map(|m| m[0])
    }

    /// Marginal variance per coordinate.
    pub fn variances(&self) -> Option<Vec<f64>> {
        match self {
            Message::Gaussian(g) if g.is_proper() => Some(vec![g.variance()]),
            Message::MvGaussian(g) => g
                .covariance()
                .map(|c| c.diagonal().iter().copied().collect()),
            Message::PointMass(p) => Some(vec![0.0; p.location.len()]),
            Message::Bernoulli(b) => {
                let p = b.probability();
                Some(vec![p * (1.0 - p)])
            }
            _ => None,
        }
    }

    fn compatible(&self, other: &Message) -> Result<()> {
        if self.family() == other.family() {
            Ok(())
        } else {
            Err(MessageError::FamilyMismatch(self.family(), other.family()))
        }
    }

    /// Product of two messages. Errors if the result has negative precision.
    pub fn multiply(&self, other: &Message) -> Result<Message> {
        let out = self.multiply_unchecked(other)?;
        out.check_precision()?;
        Ok(out)
    }

    /// Product without the properness check; used when accumulating factors
    /// whose partial products may be improper.
    pub fn multiply_unchecked(&self, other: &Message) -> Result<Message> {
        self.compatible(other)?;
        Ok(match (self, other) {
            (Message::PointMass(a), Message::PointMass(b)) => {
                if a.location == b.location {
                    self.clone()
                } else {
                    return Err(MessageError::ConflictingPointMasses);
                }
            }
            (Message::PointMass(_), _) => self.clone(),
            (_, Message::PointMass(_)) => other.clone(),
            (Message::Gaussian(a), Message::Gaussian(b)) => {
                Message::Gaussian(Gaussian::from_natural(a.eta1 + b.eta1, a.eta2 + b.eta2))
            }
            (Message::MvGaussian(a), Message::MvGaussian(b)) => {
                Message::MvGaussian(MvGaussian::from_information(&a.h + &b.h, &a.k + &b.k))
            }
            (Message::Bernoulli(a), Message::Bernoulli(b)) => {
                let s = a.log_odds + b.log_odds;
                if s.is_nan() {
                    return Err(MessageError::ConflictingPointMasses);
                }
                Message::Bernoulli(Bernoulli::from_log_odds(s))
            }
            _ => unreachable!("families already checked"),
        })
    }

    /// Quotient in natural parameters. The result may be improper, which is
    /// allowed for EP cavities.
    pub fn divide(&self, other: &Message) -> Result<Message> {
        self.compatible(other)?;
        Ok(match (self, other) {
            (Message::PointMass(a), Message::PointMass(b)) => {
                if a.location == b.location {
                    Message::uniform(self.family())
                } else {
                    return Err(MessageError::ConflictingPointMasses);
                }
            }
            (Message::PointMass(_), _) => self.clone(),
            (_, Message::PointMass(_)) => return Err(MessageError::ConflictingPointMasses),
            (Message::Gaussian(a), Message::Gaussian(b)) => {
                Message::Gaussian(Gaussian::from_natural(a.eta1 - b.eta1, a.eta2 - b.eta2))
            }
            (Message::MvGaussian(a), Message::MvGaussian(b)) => {
                Message::MvGaussian(MvGaussian::from_information(&a.h - &b.h, &a.k - &b.k))
            }
            (Message::Bernoulli(a), Message::Bernoulli(b)) => {
                if a.log_odds.is_infinite() && a.log_odds == b.log_odds {
                    Message::Bernoulli(Bernoulli::uniform())
                } else if b.log_odds.is_infinite() {
                    return Err(MessageError::ConflictingPointMasses);
                } else {
                    Message::Bernoulli(Bernoulli::from_log_odds(a.log_odds - b.log_odds))
                }
            }
            _ => unreachable!("families already checked"),
        })
    }

    /// Product of many messages, checked for properness only at the end.
    pub fn product<'a, I>(family: Family, messages: I) -> Result<Message>
    where
        I: IntoIterator<Item = &'a Message>,
    {
        let mut acc = Message::uniform(family);
        for m in messages {
            acc.accumulate(m)?;
        }
        Ok(acc)
    }

    /// In-place unchecked product.
    pub fn accumulate(&mut self, other: &Message) -> Result<()> {
        match (&mut *self, other) {
            (Message::Gaussian(a), Message::Gaussian(b)) => {
                a.eta1 += b.eta1;
                a.eta2 += b.eta2;
                Ok(())
            }
            (Message::MvGaussian(a), Message::MvGaussian(b)) if a.dim() == b.dim() => {
                a.h += &b.h;
                a.k += &b.k;
                Ok(())
            }
            _ => {
                *self = self.multiply_unchecked(other)?;
                Ok(())
            }
        }
    }

    fn check_precision(&self) -> Result<()> {
        match self {
            Message::Gaussian(g) if g.precision() < -PRECISION_TOLERANCE => {
                Err(MessageError::NegativePrecision(g.precision()))
            }
            Message::MvGaussian(g) if !g.is_uniform() => {
                let e = g.min_eigenvalue();
                if e < -PRECISION_TOLERANCE {
                    Err(MessageError::NegativePrecision(e))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Mean and raw second moment. Uniform and improper messages have none.
    pub fn moments(&self) -> Result<Moments> {
        match self {
            Message::Gaussian(g) => {
                if !g.is_proper() {
                    return Err(MessageError::NoMoments);
                }
                let mean = g.mean();
                Ok(Moments::Scalar {
                    mean,
                    second: mean * mean + g.variance(),
                })
            }
            Message::MvGaussian(g) => {
                let chol = g.k.clone().cholesky().ok_or(MessageError::NoMoments)?;
                let cov = chol.inverse();
                let mean = chol.solve(&g.h);
                let second = &cov + &mean * mean.transpose();
                Ok(Moments::Vector { mean, second })
            }
            Message::Bernoulli(b) => Ok(Moments::Probability(b.probability())),
            Message::PointMass(p) => {
                if p.location.len() == 1 {
                    let x = p.location[0];
                    Ok(Moments::Scalar {
                        mean: x,
                        second: x * x,
                    })
                } else {
                    let mean = DVector::from_column_slice(&p.location);
                    let second = &mean * mean.transpose();
                    Ok(Moments::Vector { mean, second })
                }
            }
        }
    }

    /// Message in `family` whose moments equal `moments`. Degenerate
    /// variance collapses to a point mass.
    pub fn from_moments(family: Family, moments: &Moments) -> Result<Message> {
        match (family, moments) {
            (Family::Gaussian, Moments::Scalar { mean, second }) => {
                let variance = second - mean * mean;
                let scale = second.abs().max(1.0);
                if !variance.is_finite() || variance < -PRECISION_TOLERANCE * scale {
                    return Err(MessageError::InvalidMoments(format!(
                        "negative variance {variance}"
                    )));
                }
                if variance < POINT_MASS_VARIANCE {
                    Ok(Message::scalar_point(*mean))
                } else {
                    Ok(Message::gaussian(*mean, variance))
                }
            }
            (Family::MvGaussian(d), Moments::Vector { mean, second }) if mean.len() == d => {
                let mut cov = second - mean * mean.transpose();
                cov = (&cov + cov.transpose()) * 0.5;
                let eig = SymmetricEigen::new(cov);
                let scale = second.abs().max().max(1.0);
                let max = eig.eigenvalues.max();
                let min = eig.eigenvalues.min();
                if !max.is_finite() || min < -PRECISION_TOLERANCE * scale {
                    return Err(MessageError::InvalidMoments(format!(
                        "covariance eigenvalue {min}"
                    )));
                }
                if max < POINT_MASS_VARIANCE {
                    return Ok(Message::point_mass(mean.iter().copied().collect()));
                }
                let inv = eig.eigenvalues.map(|l| 1.0 / l.max(POINT_MASS_VARIANCE));
                let k =
                    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
                let k = (&k + k.transpose()) * 0.5;
                let h = &k * mean;
                Ok(Message::MvGaussian(MvGaussian::from_information(h, k)))
            }
            (Family::Bernoulli, Moments::Probability(p)) => {
                if !(-PRECISION_TOLERANCE..=1.0 + PRECISION_TOLERANCE).contains(p) {
                    return Err(MessageError::InvalidMoments(format!("probability {p}")));
                }
                Ok(Message::bernoulli(p.clamp(0.0, 1.0)))
            }
            _ => Err(MessageError::InvalidMoments(format!(
                "moments do not match family {family}"
            ))),
        }
    }

    /// Averages the first two moments across messages and refits.
    pub fn moment_average(messages: &[Message]) -> Result<Message> {
        let first = messages.first().ok_or(MessageError::EmptyAverage)?;
        let family = first.family();
        let mut acc = first.moments()?;
        for m in &messages[1..] {
            first.compatible(m)?;
            acc.add_scaled(&m.moments()?, 1.0)?;
        }
        acc.scale(1.0 / messages.len() as f64);
        Message::from_moments(family, &acc)
    }

    /// Damped update `alpha * new + (1 - alpha) * old` in natural parameters.
    pub fn damp(old: &Message, new: &Message, alpha: f64) -> Result<Message> {
        old.compatible(new)?;
        if alpha >= 1.0 || old.is_point_mass() || new.is_point_mass() {
            return Ok(new.clone());
        }
        let beta = 1.0 - alpha;
        Ok(match (old, new) {
            (Message::Gaussian(o), Message::Gaussian(n)) => {
                Message::Gaussian(Gaussian::from_natural(
                    alpha * n.eta1 + beta * o.eta1,
                    alpha * n.eta2 + beta * o.eta2,
                ))
            }
            (Message::MvGaussian(o), Message::MvGaussian(n)) => {
                Message::MvGaussian(MvGaussian::from_information(
                    &n.h * alpha + &o.h * beta,
                    &n.k * alpha + &o.k * beta,
                ))
            }
            (Message::Bernoulli(o), Message::Bernoulli(n)) => Message::Bernoulli(
                Bernoulli::from_log_odds(alpha * n.log_odds + beta * o.log_odds),
            ),
            _ => new.clone(),
        })
    }

    /// Natural parameters flattened; point masses report their location.
    pub fn natural_parameters(&self) -> Vec<f64> {
        match self {
            Message::Gaussian(g) => vec![g.eta1, g.eta2],
            Message::MvGaussian(g) => g.h.iter().chain(g.k.iter()).copied().collect(),
            Message::Bernoulli(b) => vec![b.log_odds],
            Message::PointMass(p) => p.location.clone(),
        }
    }

    /// Largest absolute difference in natural parameters; infinite when the
    /// two messages are not of the same kind.
    pub fn max_natural_difference(&self, other: &Message) -> f64 {
        if std::mem::discriminant(self) != std::mem::discriminant(other) {
            return f64::INFINITY;
        }
        let a = self.natural_parameters();
        let b = other.natural_parameters();
        if a.len() != b.len() {
            return f64::INFINITY;
        }
        a.iter()
            .zip(&b)
            .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() })
            .fold(0.0, f64::max)
    }
}

/// Serde wire form: `{ "family": ..., "parameters": {...} }`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "family", content = "parameters", rename_all = "camelCase")]
enum MessageRecord {
    Gaussian {
        eta1: f64,
        eta2: f64,
    },
    MvGaussian {
        h: Vec<f64>,
        k: Vec<Vec<f64>>,
    },
    Bernoulli {
        #[serde(rename = "logOdds", with = "crate::serde_float")]
        log_odds: f64,
    },
    PointMass {
        location: Vec<f64>,
    },
}

impl Serialize for Message {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rec = match self {
            Message::Gaussian(g) => MessageRecord::Gaussian {
                eta1: g.eta1,
                eta2: g.eta2,
            },
            Message::MvGaussian(g) => MessageRecord::MvGaussian {
                h: g.h.iter().copied().collect(),
                k: (0..g.dim())
                    .map(|i| g.k.row(i).iter().copied().collect())
                    .collect(),
            },
            Message::Bernoulli(b) => MessageRecord::Bernoulli {
                log_odds: b.log_odds,
            },
            Message::PointMass(p) => MessageRecord::PointMass {
                location: p.location.clone(),
            },
        };
        rec.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Message {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        Ok(match MessageRecord::deserialize(d)? {
            MessageRecord::Gaussian { eta1, eta2 } => {
                Message::Gaussian(Gaussian::from_natural(eta1, eta2))
            }
            MessageRecord::MvGaussian { h, k } => {
                let n = h.len();
                if k.len() != n || k.iter().any(|row| row.len() != n) {
                    return Err(D::Error::custom("precision matrix shape mismatch"));
                }
                let k = DMatrix::from_fn(n, n, |i, j| k[i][j]);
                Message::MvGaussian(MvGaussian::from_information(DVector::from_vec(h), k))
            }
            MessageRecord::Bernoulli { log_odds } => {
                Message::Bernoulli(Bernoulli::from_log_odds(log_odds))
            }
            MessageRecord::PointMass { location } => Message::point_mass(location),
        })
    }
}
