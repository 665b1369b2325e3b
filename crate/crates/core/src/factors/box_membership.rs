//! Box membership factor: `s` is on iff pixel `p` lies inside the square of
//! centre `c` and side `l`.
//!
//! Each axis indicator is smoothed with a probit edge of width `w`, which
//! lets the integral over the centre coordinate be done in closed form for a
//! fixed side length. The side length is integrated on a trapezoid grid.
//! Centre messages are per-axis (diagonal precision).

use nalgebra::{DMatrix, DVector};

use crate::expfam::{Bernoulli, Gaussian, Message, MvGaussian};

use super::quadrature::{interval_probability, normal_pdf, Grid, QuadratureSpec};
use super::{FactorError, Outgoing};

/// Log-odds sent to `s` are kept finite so that beliefs never become certain.
pub const LOG_ODDS_CAP: f64 = 30.0;

/// Closed-form expectations over one centre coordinate for fixed side `l`.
#[derive(Clone, Copy, Debug, Default)]
struct AxisTerms {
    /// E[I]
    inside: f64,
    /// 1 - E[I]
    outside: f64,
    /// E[(c - μ) I]
    first: f64,
    /// E[(c - μ)² I]
    second: f64,
}

/// `offset` is the cavity mean minus the pixel coordinate.
fn axis_terms(offset: f64, var: f64, edge: f64, l: f64) -> AxisTerms {
    if l <= 0.0 {
        return AxisTerms {
            outside: 1.0,
            ..Default::default()
        };
    }
    let s = (var + edge * edge).sqrt();
    let u1 = (offset + 0.5 * l) / s;
    let u2 = (offset - 0.5 * l) / s;
    let (inside, outside) = interval_probability(u2, u1);
    let (p1, p2) = (normal_pdf(u1), normal_pdf(u2));
    AxisTerms {
        inside,
        outside,
        first: var / s * (p1 - p2),
        second: var * inside - var * var / (s * s) * (u1 * p1 - u2 * p2),
    }
}

#[derive(Clone, Copy, Debug)]
enum Side {
    Fixed(f64),
    Normal(f64, f64),
}

/// Messages to `[s, c, l]` for the pixel at `pixel`.
pub(crate) fn messages(
    cavities: &[Message],
    pixel: [f64; 2],
    edge: f64,
    spec: &QuadratureSpec,
) -> Result<Vec<Outgoing>, FactorError> {
    let log_odds = match &cavities[0] {
        Message::Bernoulli(b) => b.log_odds,
        _ => return Err(FactorError::Family("box selector must be Bernoulli")),
    };
    let pi = crate::expfam::sigmoid(log_odds);

    let (c_mean, c_var) = match &cavities[1] {
        Message::PointMass(p) if p.location.len() == 2 => (p.location.clone(), vec![0.0, 0.0]),
        Message::MvGaussian(g) if g.dim() == 2 => {
            let cov = g.covariance().ok_or(FactorError::ImproperCavity("c"))?;
            let mean = &cov * &g.h;
            (vec![mean[0], mean[1]], vec![cov[(0, 0)], cov[(1, 1)]])
        }
        _ => return Err(FactorError::Family("box centre must be a 2-D Gaussian")),
    };
    let side = match &cavities[2] {
        Message::PointMass(p) => Side::Fixed(p.location[0]),
        Message::Gaussian(g) if g.is_proper() => Side::Normal(g.mean(), g.variance()),
        Message::Gaussian(_) => return Err(FactorError::ImproperCavity("l")),
        _ => return Err(FactorError::Family("box side must be scalar")),
    };

    let dx = c_mean[0] - pixel[0];
    let dy = c_mean[1] - pixel[1];

    // Sums over l nodes, weights include the cavity density of l.
    // [mass, A, Ā, l'·T, l'²·T, x'·A-ish, x'²·T, y'·A-ish, y'²·T]
    let mut sums = [0.0f64; 9];
    let mut accumulate = |l: f64, lc: f64, weight: f64| {
        let x = axis_terms(dx, c_var[0], edge, l);
        let y = axis_terms(dy, c_var[1], edge, l);
        let a = x.inside * y.inside;
        let a_bar = x.outside + x.inside * y.outside;
        let t = pi * a + (1.0 - pi) * a_bar;
        sums[0] += weight;
        sums[1] += weight * a;
        sums[2] += weight * a_bar;
        sums[3] += weight * lc * t;
        sums[4] += weight * lc * lc * t;
        sums[5] += weight * (2.0 * pi - 1.0) * x.first * y.inside;
        sums[6] +=
            weight * (pi * x.second * y.inside + (1.0 - pi) * (c_var[0] - x.second * y.inside));
        sums[7] += weight * (2.0 * pi - 1.0) * y.first * x.inside;
        sums[8] +=
            weight * (pi * y.second * x.inside + (1.0 - pi) * (c_var[1] - y.second * x.inside));
    };

    match side {
        Side::Fixed(l) => accumulate(l, 0.0, 1.0),
        Side::Normal(mu, var) => {
            let sd = var.sqrt();
            let w = spec.window_sigmas;
            let sx = (c_var[0] + edge * edge).sqrt();
            let sy = (c_var[1] + edge * edge).sqrt();
            let scale = sd.min(2.0 * sx).min(2.0 * sy);
            let grid = Grid::cover(mu - w * sd, mu + w * sd, scale, spec);
            for i in 0..grid.n {
                let l = grid.node(i);
                let z = (l - mu) / sd;
                accumulate(l, l - mu, (-0.5 * z * z).exp());
            }
        }
    }

    let mass = sums[0];
    let z1 = sums[1] / mass;
    let z0 = sums[2] / mass;
    let to_s = Message::Bernoulli(Bernoulli::from_log_odds(
        (z1.ln() - z0.ln()).clamp(-LOG_ODDS_CAP, LOG_ODDS_CAP),
    ));
    let total = pi * sums[1] + (1.0 - pi) * sums[2];
    if !(total > 0.0) {
        return Ok(cavities
            .iter()
            .map(|c| Outgoing::flagged(Message::uniform(c.family()), "zero tilted mass"))
            .collect());
    }

    let to_l = match side {
        Side::Fixed(_) => Message::uniform(cavities[2].family()),
        Side::Normal(mu, _) => {
            let m1 = sums[3] / total;
            let var = sums[4] / total - m1 * m1;
            if !(var > 0.0 && m1.is_finite()) {
                return Err(FactorError::Degenerate("l"));
            }
            let tilted = Message::gaussian(mu + m1, var);
            tilted.divide(&cavities[2])?
        }
    };

    let to_c = if cavities[1].is_point_mass() {
        Message::uniform(cavities[1].family())
    } else {
        let mut h = DVector::zeros(2);
        let mut k = DMatrix::zeros(2, 2);
        for (axis, (first, second)) in [(sums[5], sums[6]), (sums[7], sums[8])]
            .into_iter()
            .enumerate()
        {
            let m1 = first / total;
            let var = second / total - m1 * m1;
            if !(var > 0.0 && m1.is_finite()) {
                return Err(FactorError::Degenerate("c"));
            }
            let tilted = Gaussian::from_mean_variance(c_mean[axis] + m1, var);
            let cav = Gaussian::from_mean_variance(c_mean[axis], c_var[axis]);
            h[axis] = tilted.eta1 - cav.eta1;
            k[(axis, axis)] = -2.0 * (tilted.eta2 - cav.eta2);
        }
        Message::MvGaussian(MvGaussian::from_information(h, k))
    };

    Ok(vec![
        Outgoing::new(to_s),
        Outgoing::new(to_c),
        Outgoing::new(to_l),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_terms_match_direct_integration() {
        let (offset, var, edge, l): (f64, f64, f64, f64) = (0.3, 0.2, 0.05, 1.5);
        let sd = var.sqrt();
        let n = 20001;
        let (lo, hi) = (-10.0 * sd, 10.0 * sd);
        let h = (hi - lo) / (n - 1) as f64;
        let mut direct = [0.0; 3];
        for i in 0..n {
            let c = lo + h * i as f64;
            let dens = normal_pdf(c / sd) / sd;
            // pixel at 0, centre at offset + c
            let centre = offset + c;
            let ind = super::super::quadrature::normal_cdf((centre + 0.5 * l) / edge)
                - super::super::quadrature::normal_cdf((centre - 0.5 * l) / edge);
            direct[0] += h * dens * ind;
            direct[1] += h * dens * ind * c;
            direct[2] += h * dens * ind * c * c;
        }
        let t = axis_terms(offset, var, edge, l);
        assert!((t.inside - direct[0]).abs() < 1e-9);
        assert!((t.first - direct[1]).abs() < 1e-9);
        assert!((t.second - direct[2]).abs() < 1e-9);
        assert!((t.inside + t.outside - 1.0).abs() < 1e-15);
    }
}
