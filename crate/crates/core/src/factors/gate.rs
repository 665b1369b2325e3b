//! Gate factor `z ~ N(fg, σg²)` when `s` is on, `z ~ N(bg, σg²)` otherwise.

use crate::expfam::{sigmoid, Bernoulli, Family, Gaussian, Message, Moments};

use super::quadrature::ln_normal_density;
use super::{FactorError, InferenceMode, Outgoing};

#[derive(Clone, Copy, Debug)]
enum Q {
    Uniform,
    Fixed(f64),
    Normal(f64, f64),
}

impl Q {
    fn of(m: &Message) -> Result<Q, FactorError> {
        match m {
            Message::PointMass(p) if p.location.len() == 1 => Ok(Q::Fixed(p.location[0])),
            Message::Gaussian(g) if g.is_uniform() => Ok(Q::Uniform),
            Message::Gaussian(g) if g.is_proper() => Ok(Q::Normal(g.mean(), g.variance())),
            Message::Gaussian(_) => Err(FactorError::ImproperCavity("gate")),
            _ => Err(FactorError::Family("gate expects scalar Gaussian colours")),
        }
    }

    fn mean_var(self) -> Option<(f64, f64)> {
        match self {
            Q::Uniform => None,
            Q::Fixed(x) => Some((x, 0.0)),
            Q::Normal(m, v) => Some((m, v)),
        }
    }

    /// `self` times a Gaussian likelihood `N(mean; ·, var)`, as (mean, variance).
    fn posterior(self, mean: f64, var: f64) -> (f64, f64) {
        match self {
            Q::Uniform => (mean, var),
            Q::Fixed(x) => (x, 0.0),
            Q::Normal(m, v) => {
                let prec = 1.0 / v + 1.0 / var;
                ((m / v + mean / var) / prec, 1.0 / prec)
            }
        }
    }
}

fn log_odds_of(m: &Message) -> Result<f64, FactorError> {
    match m {
        Message::Bernoulli(b) => Ok(b.log_odds),
        _ => Err(FactorError::Family("gate selector must be Bernoulli")),
    }
}

/// Convolution of `q` with N(0, var), as a message.
fn widened(q: Q, var: f64) -> Message {
    match q.mean_var() {
        None => Message::uniform(Family::Gaussian),
        Some((m, v)) => Message::gaussian(m, v + var),
    }
}

fn mixture(w1: f64, a: (f64, f64), b: (f64, f64)) -> Moments {
    let w0 = 1.0 - w1;
    let mean = w1 * a.0 + w0 * b.0;
    let second = w1 * (a.1 + a.0 * a.0) + w0 * (b.1 + b.0 * b.0);
    Moments::Scalar { mean, second }
}

fn project_and_divide(moments: Moments, cavity: &Message) -> Result<Message, FactorError> {
    if cavity.is_point_mass() {
        return Ok(Message::uniform(cavity.family()));
    }
    let tilted = Message::from_moments(cavity.family(), &moments)?;
    Ok(tilted.divide(cavity)?)
}

/// Messages to `[z, s, fg, bg]`.
pub(crate) fn messages(
    inputs: &[Message],
    gate_variance: f64,
    mode: InferenceMode,
) -> Result<Vec<Outgoing>, FactorError> {
    let z = Q::of(&inputs[0])?;
    let lo = log_odds_of(&inputs[1])?;
    let fg = Q::of(&inputs[2])?;
    let bg = Q::of(&inputs[3])?;
    match mode {
        InferenceMode::Ep => ep(z, lo, fg, bg, inputs, gate_variance),
        InferenceMode::Vmp => vmp(z, lo, fg, bg, gate_variance),
    }
}

fn ep(z: Q, lo: f64, fg: Q, bg: Q, cav: &[Message], s2: f64) -> Result<Vec<Outgoing>, FactorError> {
    let evidence = |branch: Q| -> f64 {
        match (z.mean_var(), branch.mean_var()) {
            (Some((mz, vz)), Some((mb, vb))) => ln_normal_density(mz, mb, vz + vb + s2),
            _ => 0.0,
        }
    };
    let (ln_f, ln_b) = (evidence(fg), evidence(bg));
    let to_s = Message::Bernoulli(Bernoulli::from_log_odds(ln_f - ln_b));

    if lo == f64::INFINITY || lo == f64::NEG_INFINITY {
        let on = lo > 0.0;
        let chosen = if on { fg } else { bg };
        let to_chosen = widened(z, s2);
        let to_z = widened(chosen, s2);
        let uniform = Message::uniform(Family::Gaussian);
        let (to_fg, to_bg) = if on {
            (to_chosen, uniform)
        } else {
            (uniform, to_chosen)
        };
        return Ok(vec![
            Outgoing::new(to_z),
            Outgoing::new(to_s),
            Outgoing::new(to_fg),
            Outgoing::new(to_bg),
        ]);
    }

    // Posterior responsibility of the fg branch under the tilted distribution.
    let w_f = sigmoid(lo + ln_f - ln_b);

    let to_z = match (fg.mean_var(), bg.mean_var()) {
        (Some((mf, vf)), Some((mb, vb))) => {
            let a = z.posterior(mf, vf + s2);
            let b = z.posterior(mb, vb + s2);
            project_and_divide(mixture(w_f, a, b), &cav[0])?
        }
        _ => Message::uniform(Family::Gaussian),
    };

    let colour = |q: Q, w: f64, cavity: &Message| -> Result<Message, FactorError> {
        let Some((mq, vq)) = q.mean_var() else {
            return Ok(Message::uniform(Family::Gaussian));
        };
        let Some((mz, vz)) = z.mean_var() else {
            return Ok(Message::uniform(Family::Gaussian));
        };
        let on = q.posterior(mz, vz + s2);
        project_and_divide(mixture(w, on, (mq, vq)), cavity)
    };
    let to_fg = colour(fg, w_f, &cav[2])?;
    let to_bg = colour(bg, 1.0 - w_f, &cav[3])?;

    Ok(vec![
        Outgoing::new(to_z),
        Outgoing::new(to_s),
        Outgoing::new(to_fg),
        Outgoing::new(to_bg),
    ])
}

fn vmp(z: Q, lo: f64, fg: Q, bg: Q, s2: f64) -> Result<Vec<Outgoing>, FactorError> {
    let need = |q: Q| {
        q.mean_var()
            .ok_or(FactorError::ImproperCavity("gate belief"))
    };
    let (mz, vz) = need(z)?;
    let (mf, vf) = need(fg)?;
    let (mb, vb) = need(bg)?;
    let p = sigmoid(lo);
    let sq_f = (mz - mf).powi(2) + vz + vf;
    let sq_b = (mz - mb).powi(2) + vz + vb;
    let to_s = Message::Bernoulli(Bernoulli::from_log_odds(-(sq_f - sq_b) / (2.0 * s2)));
    let to_z = Message::Gaussian(Gaussian::from_natural(
        (p * mf + (1.0 - p) * mb) / s2,
        -0.5 / s2,
    ));
    let to_fg = Message::Gaussian(Gaussian::from_natural(p * mz / s2, -0.5 * p / s2));
    let to_bg = Message::Gaussian(Gaussian::from_natural(
        (1.0 - p) * mz / s2,
        -0.5 * (1.0 - p) / s2,
    ));
    Ok(vec![
        Outgoing::new(to_z),
        Outgoing::new(to_s),
        Outgoing::new(to_fg),
        Outgoing::new(to_bg),
    ])
}
