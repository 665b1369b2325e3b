//! Rotation factor `p = (r sin a, r cos a) + N(0, σf² I)`.
//!
//! Messages are moment-matched projections of the tilted distribution.
//! The point `p` is integrated analytically; the remaining integral over
//! `(a, r)` runs on a trapezoid grid placed where the tilted mass is. The
//! angle axis folds the cavity over whole periods because the likelihood
//! only sees `a` modulo 2π.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use std::f64::consts::PI;

use crate::expfam::{Message, Moments};

use super::quadrature::{Grid, LogAccumulator, QuadratureSpec};
use super::{FactorError, Outgoing};

const JITTER: f64 = 1e-8;

/// Scalar cavity: fixed value or proper Gaussian.
#[derive(Clone, Copy, Debug)]
enum Scalar {
    Fixed(f64),
    Normal { mean: f64, sd: f64 },
}

impl Scalar {
    fn from_message(m: &Message, name: &'static str) -> Result<Scalar, FactorError> {
        match m {
            Message::PointMass(p) => Ok(Scalar::Fixed(p.location[0])),
            Message::Gaussian(g) if g.is_proper() => Ok(Scalar::Normal {
                mean: g.mean(),
                sd: g.variance().sqrt(),
            }),
            Message::Gaussian(_) => Err(FactorError::ImproperCavity(name)),
            _ => Err(FactorError::Family(
                "rotation expects scalar Gaussian angle and radius",
            )),
        }
    }
}

enum PointCavity {
    Uniform,
    Fixed(Vector2<f64>),
    Normal { h: Vector2<f64>, k: Matrix2<f64> },
}

fn point_cavity(m: &Message) -> Result<PointCavity, FactorError> {
    match m {
        Message::PointMass(p) if p.location.len() == 2 => Ok(PointCavity::Fixed(Vector2::new(
            p.location[0],
            p.location[1],
        ))),
        Message::MvGaussian(g) if g.dim() == 2 => {
            if g.is_uniform() {
                return Ok(PointCavity::Uniform);
            }
            let k = Matrix2::new(g.k[(0, 0)], g.k[(0, 1)], g.k[(1, 0)], g.k[(1, 1)]);
            if k.cholesky().is_none() {
                return Err(FactorError::ImproperCavity("p"));
            }
            Ok(PointCavity::Normal {
                h: Vector2::new(g.h[0], g.h[1]),
                k,
            })
        }
        _ => Err(FactorError::Family("rotation expects a 2-D point")),
    }
}

fn sym_eigen(m: &Matrix2<f64>) -> (f64, f64) {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    (0.5 * tr - disc, 0.5 * tr + disc)
}

/// Nodes with log quadrature weights (cavity density included) and the
/// conditional first two moments of the original variable, centred at the
/// cavity mean.
struct Axis {
    nodes: Vec<f64>,
    ln_w: Vec<f64>,
    m1: Vec<f64>,
    m2: Vec<f64>,
}

fn ln_gauss(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln()
}

fn plain_axis(grid: Grid, q: Scalar) -> Axis {
    let mut axis = Axis {
        nodes: Vec::with_capacity(grid.n),
        ln_w: Vec::with_capacity(grid.n),
        m1: Vec::with_capacity(grid.n),
        m2: Vec::with_capacity(grid.n),
    };
    let (mean, sd) = match q {
        Scalar::Normal { mean, sd } => (mean, sd),
        Scalar::Fixed(x) => {
            axis.nodes.push(x);
            axis.ln_w.push(0.0);
            axis.m1.push(0.0);
            axis.m2.push(0.0);
            return axis;
        }
    };
    let ln_step = grid.step.max(f64::MIN_POSITIVE).ln();
    for i in 0..grid.n {
        let x = grid.node(i);
        axis.nodes.push(x);
        axis.ln_w.push(ln_gauss(x, mean, sd) + ln_step);
        axis.m1.push(x - mean);
        axis.m2.push((x - mean) * (x - mean));
    }
    axis
}

/// Angle nodes on a window of at most one period, with the cavity density
/// summed over every period it covers.
fn folded_axis(grid: Grid, mean: f64, sd: f64, window: f64) -> Axis {
    let mut axis = Axis {
        nodes: Vec::with_capacity(grid.n),
        ln_w: Vec::with_capacity(grid.n),
        m1: Vec::with_capacity(grid.n),
        m2: Vec::with_capacity(grid.n),
    };
    let ln_step = grid.step.ln();
    let reach = (window + 1.0) * sd;
    for i in 0..grid.n {
        let theta = grid.node(i);
        let k_lo = ((mean - reach - theta) / (2.0 * PI)).ceil() as i64;
        let k_hi = ((mean + reach - theta) / (2.0 * PI)).floor() as i64;
        let mut acc = LogAccumulator::new(2);
        for k in k_lo..=k_hi {
            let d = theta + 2.0 * PI * k as f64 - mean;
            acc.add(ln_gauss(d, 0.0, sd), &[d, d * d]);
        }
        axis.nodes.push(theta);
        match acc.means() {
            Some(m) => {
                axis.ln_w.push(acc.ln_total() + ln_step);
                axis.m1.push(m[0]);
                axis.m2.push(m[1]);
            }
            None => {
                // No period lands inside the cavity window; use the nearest.
                let k = ((mean - theta) / (2.0 * PI)).round();
                let d = theta + 2.0 * PI * k - mean;
                axis.ln_w.push(ln_gauss(d, 0.0, sd) + ln_step);
                axis.m1.push(d);
                axis.m2.push(d * d);
            }
        }
    }
    axis
}

fn angle_axis(
    q: Scalar,
    centre: f64,
    half_width: f64,
    likelihood_scale: f64,
    spec: &QuadratureSpec,
) -> Axis {
    let (mean, sd) = match q {
        Scalar::Fixed(_) => return plain_axis(Grid::cover(0.0, 0.0, 1.0, spec), q),
        Scalar::Normal { mean, sd } => (mean, sd),
    };
    let w = spec.window_sigmas;
    let scale = sd.min(likelihood_scale);
    if w * sd < half_width {
        let grid = Grid::cover(mean - w * sd, mean + w * sd, scale, spec);
        return plain_axis(grid, q);
    }
    let grid = if half_width >= PI {
        Grid::periodic(centre - PI, scale, spec)
    } else {
        Grid::cover(centre - half_width, centre + half_width, scale, spec)
    };
    folded_axis(grid, mean, sd, w)
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (lo < hi).then_some((lo, hi))
}

/// Messages to `[p, a, r]` given cavities on the same edges.
pub(crate) fn messages(
    cavities: &[Message],
    noise_variance: f64,
    spec: &QuadratureSpec,
) -> Result<Vec<Outgoing>, FactorError> {
    let p_cav = point_cavity(&cavities[0])?;
    let a_q = Scalar::from_message(&cavities[1], "a")?;
    let r_q = Scalar::from_message(&cavities[2], "r")?;
    let s2 = noise_variance;
    let w = spec.window_sigmas;

    // Likelihood of (a, r) after integrating out p: N(f; mu_p, S_p).
    let (mu_p, s_inv, sp_eigs, h_p, k_p) = match &p_cav {
        PointCavity::Uniform => (None, None, None, Vector2::zeros(), Matrix2::zeros()),
        PointCavity::Fixed(x) => (
            Some(*x),
            Some(Matrix2::identity() / s2),
            Some((s2, s2)),
            Vector2::zeros(),
            Matrix2::zeros(),
        ),
        PointCavity::Normal { h, k } => {
            let cov = k.try_inverse().ok_or(FactorError::ImproperCavity("p"))?;
            let mu = cov * h;
            let sp = cov + Matrix2::identity() * s2;
            let sp = (sp + sp.transpose()) * 0.5;
            let eig = sym_eigen(&sp);
            let inv = sp.try_inverse().ok_or(FactorError::ImproperCavity("p"))?;
            (Some(mu), Some(inv), Some(eig), *h, *k)
        }
    };

    let mut flag = None;

    // r intervals paired with the sign of r they cover.
    let mut r_axes: Vec<(Axis, f64, bool)> = Vec::new();
    match r_q {
        Scalar::Fixed(r0) => r_axes.push((
            plain_axis(Grid::cover(r0, r0, 1.0, spec), r_q),
            r0.abs(),
            r0 < 0.0,
        )),
        Scalar::Normal { mean, sd } => {
            let mut cav = (mean - w * sd, mean + w * sd);
            match (mu_p, sp_eigs) {
                (Some(mu), Some((lmin, lmax))) => {
                    let rho = mu.norm();
                    let reach = w * lmax.sqrt();
                    // When the cavity and the ring disagree the mass sits between
                    // them, possibly outside both windows. Cover the radial
                    // compromise for either principal variance.
                    let mut near = rho - reach;
                    let mut far = rho + reach;
                    for l in [lmin, lmax] {
                        let prec = sd.powi(-2) + l.recip();
                        let mode = (mean * sd.powi(-2) + rho.copysign(mean) / l) / prec;
                        let spread = w * prec.sqrt().recip();
                        near = near.min(mode.abs() - spread);
                        far = far.max(mode.abs() + spread);
                        cav = (cav.0.min(mode - spread), cav.1.max(mode + spread));
                    }
                    let inner = near.max(0.0);
                    let reach = far - rho;
                    let scale = sd.min(lmin.sqrt());
                    // Bands that meet at r = 0 are one interval; cutting there
                    // would leave trapezoid endpoints where the mass is not small.
                    let bands = if inner > 0.0 {
                        vec![(inner, far), (-far, -inner)]
                    } else {
                        vec![(-far, far)]
                    };
                    let mut pieces = Vec::new();
                    for band in bands {
                        if let Some(iv) = intersect(cav, band) {
                            pieces.push(iv);
                        }
                    }
                    if pieces.is_empty() {
                        flag = Some("radius cavity and likelihood do not overlap");
                        let lo = cav.0.min(inner);
                        let hi = cav.1.max(rho + reach);
                        pieces.push((lo, hi));
                    }
                    for (lo, hi) in pieces {
                        let axis = plain_axis(Grid::cover(lo, hi, scale, spec), r_q);
                        r_axes.push((axis, lo.abs().max(hi.abs()), hi <= 0.0));
                    }
                }
                _ => {
                    let axis = plain_axis(Grid::cover(cav.0, cav.1, sd, spec), r_q);
                    r_axes.push((axis, cav.0.abs().max(cav.1.abs()), false));
                }
            }
        }
    }

    // stats: a, a², r, r², fx, fy, fx², fx·fy, fy² (a and r centred at their cavity means)
    let mut acc = LogAccumulator::new(9);
    let mut stats = [0.0; 9];
    for (r_axis, r_abs_max, negative) in &r_axes {
        let (centre, half_width, lik_scale) = match (mu_p, sp_eigs) {
            (Some(mu), Some((lmin, lmax))) => {
                let rho = mu.norm();
                let reach = w * lmax.sqrt();
                let half = if rho > reach {
                    (reach / rho).asin()
                } else {
                    PI
                };
                let mut centre = mu[0].atan2(mu[1]);
                if *negative {
                    centre += PI;
                }
                (centre, half, lmin.sqrt() / r_abs_max.max(1e-12))
            }
            _ => (0.0, PI, 1.0),
        };
        let a_axis = angle_axis(a_q, centre, half_width, lik_scale.max(1e-9), spec);
        let trig: Vec<(f64, f64)> = a_axis.nodes.iter().map(|t| t.sin_cos()).collect();
        for (ri, &r) in r_axis.nodes.iter().enumerate() {
            let r_ln = r_axis.ln_w[ri];
            let (dr, dr2) = (r_axis.m1[ri], r_axis.m2[ri]);
            for (ai, &(sin, cos)) in trig.iter().enumerate() {
                let f = Vector2::new(r * sin, r * cos);
                let mut ln_w = r_ln + a_axis.ln_w[ai];
                if let (Some(mu), Some(inv)) = (mu_p, s_inv) {
                    let d = f - mu;
                    ln_w -= 0.5 * (d.transpose() * inv * d)[(0, 0)];
                }
                stats[0] = a_axis.m1[ai];
                stats[1] = a_axis.m2[ai];
                stats[2] = dr;
                stats[3] = dr2;
                stats[4] = f[0];
                stats[5] = f[1];
                stats[6] = f[0] * f[0];
                stats[7] = f[0] * f[1];
                stats[8] = f[1] * f[1];
                acc.add(ln_w, &stats);
            }
        }
    }

    let Some(m) = acc.means() else {
        return Ok(cavities
            .iter()
            .map(|c| Outgoing::flagged(Message::uniform(c.family()), "zero tilted mass"))
            .collect());
    };

    let scalar_message =
        |q: Scalar, cav: &Message, m1: f64, m2: f64| -> Result<Message, FactorError> {
            match q {
                Scalar::Fixed(_) => Ok(Message::uniform(cav.family())),
                Scalar::Normal { mean, .. } => {
                    let var = (m2 - m1 * m1).max(0.0);
                    let tilted = Message::from_moments(
                        cav.family(),
                        &Moments::Scalar {
                            mean: mean + m1,
                            second: (mean + m1) * (mean + m1) + var,
                        },
                    )?;
                    Ok(tilted.divide(cav)?)
                }
            }
        };

    let (to_a, to_r) = match p_cav {
        PointCavity::Uniform => (
            Message::uniform(cavities[1].family()),
            Message::uniform(cavities[2].family()),
        ),
        _ => (
            scalar_message(a_q, &cavities[1], m[0], m[1])?,
            scalar_message(r_q, &cavities[2], m[2], m[3])?,
        ),
    };

    let ef = Vector2::new(m[4], m[5]);
    let cov_f = Matrix2::new(
        m[6] - ef[0] * ef[0],
        m[7] - ef[0] * ef[1],
        m[7] - ef[0] * ef[1],
        m[8] - ef[1] * ef[1],
    );
    let to_p = match p_cav {
        PointCavity::Fixed(_) => Message::uniform(cavities[0].family()),
        _ => {
            // Posterior of p given f is N(post (h_p + f/σ²), post).
            let post = (k_p + Matrix2::identity() / s2)
                .try_inverse()
                .ok_or(FactorError::ImproperCavity("p"))?;
            let mean = post * (h_p + ef / s2);
            let mut cov = post + post * cov_f * post / (s2 * s2);
            cov = (cov + cov.transpose()) * 0.5;
            if sym_eigen(&cov).0 < 1e-12 {
                cov += Matrix2::identity() * JITTER;
                flag = Some("tilted covariance jittered");
            }
            let mean_d = DVector::from_column_slice(mean.as_slice());
            let cov_d = DMatrix::from_column_slice(2, 2, cov.as_slice());
            let second = &cov_d + &mean_d * mean_d.transpose();
            let tilted = Message::from_moments(
                cavities[0].family(),
                &Moments::Vector {
                    mean: mean_d,
                    second,
                },
            )?;
            tilted.divide(&cavities[0])?
        }
    };

    Ok(vec![
        Outgoing {
            message: to_p,
            flag,
        },
        Outgoing {
            message: to_a,
            flag,
        },
        Outgoing {
            message: to_r,
            flag,
        },
    ])
}
