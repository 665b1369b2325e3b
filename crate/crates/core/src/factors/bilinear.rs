//! Variational messages for `s = n·l + ε` and `z = s·r + ε`, ε ~ N(0, σf²).

use nalgebra::{DMatrix, DVector};

use crate::expfam::{Gaussian, Message, Moments, MvGaussian};

use super::{FactorError, Outgoing};

fn vector_moments(m: &Message) -> Result<(DVector<f64>, DMatrix<f64>), FactorError> {
    match m.moments() {
        Ok(Moments::Vector { mean, second }) => Ok((mean, second)),
        Ok(_) => Err(FactorError::Family("expected a vector belief")),
        Err(_) => Err(FactorError::ImproperCavity("vector belief")),
    }
}

fn scalar_moments(m: &Message) -> Result<(f64, f64), FactorError> {
    match m.moments() {
        Ok(Moments::Scalar { mean, second }) => Ok((mean, second)),
        Ok(_) => Err(FactorError::Family("expected a scalar belief")),
        Err(_) => Err(FactorError::ImproperCavity("scalar belief")),
    }
}

/// Message to edge `target` of `[s, n, l]` from beliefs on the other edges.
pub(crate) fn inner_product(
    target: usize,
    beliefs: &[Message],
    noise: f64,
) -> Result<Outgoing, FactorError> {
    let msg = match target {
        0 => {
            let (n_mean, _) = vector_moments(&beliefs[1])?;
            let (l_mean, _) = vector_moments(&beliefs[2])?;
            if n_mean.len() != l_mean.len() {
                return Err(FactorError::Family("inner product dimension mismatch"));
            }
            Message::gaussian(n_mean.dot(&l_mean), noise)
        }
        _ => {
            let (s_mean, _) = scalar_moments(&beliefs[0])?;
            let (mean, second) = vector_moments(&beliefs[3 - target])?;
            Message::MvGaussian(MvGaussian::from_information(
                mean * (s_mean / noise),
                second / noise,
            ))
        }
    };
    Ok(Outgoing::new(msg))
}

/// Message to edge `target` of `[z, s, r]` from beliefs on the other edges.
pub(crate) fn product(
    target: usize,
    beliefs: &[Message],
    noise: f64,
) -> Result<Outgoing, FactorError> {
    let msg = match target {
        0 => {
            let (s_mean, _) = scalar_moments(&beliefs[1])?;
            let (r_mean, _) = scalar_moments(&beliefs[2])?;
            Message::gaussian(s_mean * r_mean, noise)
        }
        _ => {
            let (z_mean, _) = scalar_moments(&beliefs[0])?;
            let (mean, second) = scalar_moments(&beliefs[3 - target])?;
            Message::Gaussian(Gaussian::from_natural(
                mean * z_mean / noise,
                -0.5 * second / noise,
            ))
        }
    };
    Ok(Outgoing::new(msg))
}
