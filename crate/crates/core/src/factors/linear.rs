//! Exact messages for linear-Gaussian factors.
//!
//! All of these work directly on information-form parameters so that
//! uniform and improper cavities pass through without a moment conversion.

use nalgebra::{DMatrix, DVector};

use crate::expfam::{Gaussian, Message, MvGaussian};

use super::FactorError;

/// Gaussian or point mass in information form, scalar or vector.
#[derive(Clone, Debug)]
pub(crate) enum Lin {
    Info { h: DVector<f64>, k: DMatrix<f64> },
    Point(DVector<f64>),
}

impl Lin {
    pub fn from_message(m: &Message) -> Result<Lin, FactorError> {
        match m {
            Message::Gaussian(g) => Ok(Lin::Info {
                h: DVector::from_element(1, g.eta1),
                k: DMatrix::from_element(1, 1, -2.0 * g.eta2),
            }),
            Message::MvGaussian(g) => Ok(Lin::Info {
                h: g.h.clone(),
                k: g.k.clone(),
            }),
            Message::PointMass(p) => Ok(Lin::Point(DVector::from_column_slice(&p.location))),
            Message::Bernoulli(_) => Err(FactorError::Family("linear factor given a Bernoulli")),
        }
    }

    /// Point mass at the message mean; uniform when the mean is undefined.
    pub fn at_mean(m: &Message) -> Result<Lin, FactorError> {
        if let Message::Bernoulli(_) = m {
            return Err(FactorError::Family("linear factor given a Bernoulli"));
        }
        Ok(match m.mean() {
            Some(x) if x.iter().all(|v| v.is_finite()) => Lin::Point(DVector::from_vec(x)),
            _ => Lin::uniform(m.dim()),
        })
    }

    pub fn into_message(self, scalar: bool) -> Message {
        match self {
            Lin::Point(x) => Message::point_mass(x.iter().copied().collect()),
            Lin::Info { h, k } if scalar => {
                Message::Gaussian(Gaussian::from_natural(h[0], -0.5 * k[(0, 0)]))
            }
            Lin::Info { h, k } => Message::MvGaussian(MvGaussian::from_information(h, k)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Lin::Info { h, .. } => h.len(),
            Lin::Point(x) => x.len(),
        }
    }

    fn is_uniform(&self) -> bool {
        matches!(self, Lin::Info { k, .. } if k.iter().all(|v| *v == 0.0))
    }

    pub fn negate(self) -> Lin {
        match self {
            Lin::Info { h, k } => Lin::Info { h: -h, k },
            Lin::Point(x) => Lin::Point(-x),
        }
    }

    /// Flips the sign of one coordinate.
    pub fn reflect(self, axis: usize) -> Lin {
        match self {
            Lin::Info { mut h, mut k } => {
                h[axis] = -h[axis];
                k.row_mut(axis).neg_mut();
                k.column_mut(axis).neg_mut();
                Lin::Info { h, k }
            }
            Lin::Point(mut x) => {
                x[axis] = -x[axis];
                Lin::Point(x)
            }
        }
    }

    pub fn uniform(dim: usize) -> Lin {
        Lin::Info {
            h: DVector::zeros(dim),
            k: DMatrix::zeros(dim, dim),
        }
    }
}

fn symmetrize(k: DMatrix<f64>) -> DMatrix<f64> {
    (&k + k.transpose()) * 0.5
}

/// Distribution of `a + b` for independent `a`, `b`.
pub(crate) fn convolve(a: &Lin, b: &Lin) -> Lin {
    match (a, b) {
        (Lin::Point(x), Lin::Point(y)) => Lin::Point(x + y),
        (Lin::Point(x), Lin::Info { h, k }) | (Lin::Info { h, k }, Lin::Point(x)) => Lin::Info {
            h: h + k * x,
            k: k.clone(),
        },
        (Lin::Info { h: ha, k: ka }, Lin::Info { h: hb, k: kb }) => {
            if a.is_uniform() || b.is_uniform() {
                return Lin::uniform(ha.len());
            }
            let s = ka + kb;
            let Some(s_inv) = s.try_inverse() else {
                return Lin::uniform(ha.len());
            };
            let k = symmetrize(ka * &s_inv * kb);
            let h = kb * &s_inv * ha + ka * &s_inv * hb;
            Lin::Info { h, k }
        }
    }
}

/// Adds isotropic Gaussian noise of the given variance.
pub(crate) fn add_noise(a: &Lin, variance: f64) -> Lin {
    let d = a.dim();
    let noise = Lin::Info {
        h: DVector::zeros(d),
        k: DMatrix::identity(d, d) / variance,
    };
    convolve(a, &noise)
}
