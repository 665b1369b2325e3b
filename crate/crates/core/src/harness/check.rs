//! Oracle suites run by `consensus check`.
//!
//! Each suite compares library output against a brute-force reference
//! computed here: dense trapezoid grids for the non-conjugate factors, a
//! direct linear solve for the chain, and plain arithmetic identities for
//! the message algebra. Tilted moments are compared on the scale of the
//! reference: `|Δmean| / sd` and `|Δvar| / var`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{make_schedule, run_inference, EngineConfig, NoConsensus};
use crate::expfam::{sigmoid, Bernoulli, Message, MvGaussian};
use crate::factors::{FactorKind, InferenceMode, LinearRule, QuadratureSpec, BOX_EDGE_WIDTH};
use crate::models::{ChainSpec, Model, ModelKind, ModelSpec};

/// Largest allowed relative error against the dense grids.
pub const GRID_TOLERANCE: f64 = 1e-3;
/// Largest allowed error for the chain posterior.
pub const CHAIN_TOLERANCE: f64 = 1e-8;
/// Largest allowed relative error for algebra identities.
pub const ALGEBRA_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst error seen and the number of instances.
    pub detail: String,
}

fn verdict(name: &'static str, worst: f64, tol: f64, n: usize) -> CheckResult {
    CheckResult {
        name,
        passed: worst <= tol,
        detail: format!("worst {worst:.3e} (tolerance {tol:.0e}) over {n} instances"),
    }
}

pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        algebra(seed, 1000),
        chain(seed, 20),
        rotation(seed, 50),
        box_membership(seed, 50),
        gate(seed, 50),
    ]
}

/// Mean and variance of scalar `m`, or `None` if it is not a proper Gaussian.
fn scalar_moments(m: &Message) -> Option<(f64, f64)> {
    match m {
        Message::Gaussian(g) if g.is_proper() => Some((g.mean(), g.variance())),
        _ => None,
    }
}

fn scalar_error(got: Option<(f64, f64)>, mean: f64, var: f64) -> f64 {
    match got {
        Some((m, v)) => ((m - mean).abs() / var.sqrt()).max((v - var).abs() / var),
        None => f64::INFINITY,
    }
}

fn vector_error(got: &Message, mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let (Some(m), Some(c)) = (got.mean(), got.variances()) else {
        return f64::INFINITY;
    };
    let full = match got {
        Message::MvGaussian(g) => g.covariance(),
        _ => None,
    };
    let mut worst = 0.0f64;
    for i in 0..mean.len() {
        let sd = cov[(i, i)].sqrt();
        worst = worst.max((m[i] - mean[i]).abs() / sd);
        worst = worst.max((c[i] - cov[(i, i)]).abs() / cov[(i, i)]);
        if let Some(f) = &full {
            for j in 0..i {
                let scale = (cov[(i, i)] * cov[(j, j)]).sqrt();
                worst = worst.max((f[(i, j)] - cov[(i, j)]).abs() / scale);
            }
        }
    }
    worst
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    match rng.random_range(0..3) {
        0 => Message::gaussian(rng.random_range(-5.0..5.0), rng.random_range(0.01..10.0)),
        1 => Message::bernoulli(rng.random_range(0.01..0.99)),
        _ => {
            let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            let cov = &a * a.transpose() + DMatrix::identity(2, 2) * 0.1;
            let mean = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
            Message::MvGaussian(MvGaussian::from_mean_covariance(&mean, &cov))
        }
    }
}

fn random_like(rng: &mut ChaCha8Rng, like: &Message) -> Message {
    loop {
        let m = random_message(rng);
        if m.family() == like.family() {
            return m;
        }
    }
}

fn natural_error(a: &Message, b: &Message) -> f64 {
    let (x, y) = (a.natural_parameters(), b.natural_parameters());
    if x.len() != y.len() {
        return f64::INFINITY;
    }
    x.iter().zip(&y).map(|(p, q)| relative(*p, *q)).fold(0.0, f64::max)
}

/// Product then quotient, moment round trips and trivial damping.
pub fn algebra(seed: u64, cases: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let a = random_message(&mut rng);
        let b = random_like(&mut rng, &a);
        let e = match a.multiply(&b).and_then(|ab| ab.divide(&b)) {
            Ok(back) => natural_error(&back, &a),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(e);
        let e = match a
            .moments()
            .and_then(|m| Message::from_moments(a.family(), &m))
        {
            Ok(back) => natural_error(&back, &a),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(e);
        let e = match Message::damp(&a, &a, rng.random_range(0.05..1.0)) {
            Ok(d) => natural_error(&d, &a),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(e);
    }
    verdict("algebra", worst, ALGEBRA_TOLERANCE, cases)
}

/// Closed-form marginals of the chain: joint Gaussian over `(y3, d2, d1)`.
pub fn chain_posterior(spec: &ChainSpec, xs: &[f64]) -> [(f64, f64); 5] {
    let prior = [&spec.top, &spec.upper_offset, &spec.lower_offset];
    let mut k = Matrix3::zeros();
    let mut h = Vector3::zeros();
    for (i, p) in prior.iter().enumerate() {
        k[(i, i)] = 1.0 / p.variance;
        h[i] = p.mean[0] / p.variance;
    }
    // y1 = y3 + d2 + d1
    let ones = Vector3::new(1.0, 1.0, 1.0);
    k += ones * ones.transpose() * (xs.len() as f64 / spec.noise_variance);
    h += ones * (xs.iter().sum::<f64>() / spec.noise_variance);
    let cov = k.try_inverse().expect("positive definite");
    let mean = cov * h;
    let lin = |w: Vector3<f64>| (w.dot(&mean), (w.transpose() * cov * w)[(0, 0)]);
    [
        lin(Vector3::new(1.0, 1.0, 1.0)),
        lin(Vector3::new(1.0, 1.0, 0.0)),
        lin(Vector3::new(1.0, 0.0, 0.0)),
        lin(Vector3::new(0.0, 0.0, 1.0)),
        lin(Vector3::new(0.0, 1.0, 0.0)),
    ]
}

/// Chain beliefs under VMP and EP against the closed form.
pub fn chain(seed: u64, problems: usize) -> CheckResult {
    let Ok(Model::Chain(spec)) = Model::from_spec(&ModelSpec::new(ModelKind::Chain)) else {
        unreachable!("default chain spec is valid")
    };
    let model = Model::Chain(spec.clone());
    let graph = model.build_graph();
    let names = ["y1", "y2", "y3", "d1", "d2"];
    let tracked: Vec<usize> = names.iter().map(|n| graph.index_of(n).expect("chain variable")).collect();
    let schedule = make_schedule(&graph, &[]).expect("chain schedule");
    let mut worst = 0.0f64;
    for k in 0..problems {
        let sample = spec.sample(seed.wrapping_add(k as u64));
        let xs: Vec<f64> = (0..spec.observations)
            .map(|i| sample.observations[&format!("x[{i}]")][0])
            .collect();
        let truth = chain_posterior(&spec, &xs);
        // order of `truth`: y1, y2, y3, d1, d2
        let g = graph.condition(&sample.observation_messages()).expect("observations fit");
        for mode in [InferenceMode::Vmp, InferenceMode::Ep] {
            let cfg = EngineConfig {
                iterations: 20,
                mode,
                ..EngineConfig::default()
            };
            let e = match run_inference(&g, &cfg, &schedule, &tracked, &mut NoConsensus) {
                Ok(trace) => trace.iterations[cfg.iterations]
                    .beliefs
                    .iter()
                    .zip(&truth)
                    .map(|(b, &(m, v))| match scalar_moments(b) {
                        Some((bm, bv)) => (bm - m).abs().max((bv - v).abs()),
                        None => f64::INFINITY,
                    })
                    .fold(0.0, f64::max),
                Err(_) => f64::INFINITY,
            };
            worst = worst.max(e);
        }
    }
    verdict("chain", worst, CHAIN_TOLERANCE, problems)
}

/// Trapezoid nodes covering `mean ± 8 sd` with spacing at most `step`.
fn nodes(mean: f64, sd: f64, step: f64, cap: usize) -> (Vec<f64>, f64) {
    let width = 16.0 * sd;
    let n = ((width / step).ceil() as usize + 1).clamp(64, cap);
    let h = width / (n - 1) as f64;
    ((0..n).map(|i| mean - 8.0 * sd + h * i as f64).collect(), h)
}

/// Weighted first and second moments accumulated from log weights.
struct Moments1 {
    max: f64,
    w: f64,
    s: Vec<f64>,
}

impl Moments1 {
    fn new(stats: usize) -> Self {
        Moments1 {
            max: f64::NEG_INFINITY,
            w: 0.0,
            s: vec![0.0; stats],
        }
    }

    fn add(&mut self, ln_w: f64, v: &[f64]) {
        if ln_w > self.max {
            let r = (self.max - ln_w).exp();
            self.w *= r;
            self.s.iter_mut().for_each(|x| *x *= r);
            self.max = ln_w;
        }
        let w = (ln_w - self.max).exp();
        self.w += w;
        for (s, x) in self.s.iter_mut().zip(v) {
            *s += w * x;
        }
    }

    fn mean(&self, i: usize) -> f64 {
        self.s[i] / self.w
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean) * (x - mean) / var + (2.0 * PI * var).ln())
}

/// Tilted belief on edge `i`: cavity times the outgoing message.
fn tilted(cavity: &Message, message: &Message) -> Option<Message> {
    cavity.multiply(message).ok()
}

/// Rotation factor in EP mode against a dense grid over `(a, r)`; `p` is
/// Gaussian given `(a, r)` and is integrated exactly.
pub fn rotation(seed: u64, instances: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let q = QuadratureSpec::default();
    let mut worst = 0.0f64;
    for k in 0..instances {
        // every third instance has a flat angle and a ring far from the point;
        // the rest draw the point from the model so cavity and likelihood agree
        let conflict = k % 3 == 2;
        let s2 = if conflict { rng.random_range(0.001..0.01) } else { rng.random_range(0.01..0.1) };
        let sa = if conflict { log_uniform(&mut rng, 3.0, 10.0) } else { log_uniform(&mut rng, 0.02, 2.0) };
        let ma = rng.random_range(-PI..PI);
        let mr = rng.random_range(0.5..3.0);
        let sr = if conflict { log_uniform(&mut rng, 0.02, 0.1) } else { log_uniform(&mut rng, 0.02, 0.5) };
        let vp = if conflict { log_uniform(&mut rng, 0.001, 0.02) } else { log_uniform(&mut rng, 0.001, 0.5) };
        let mut normal = || rng.sample::<f64, _>(rand_distr::StandardNormal);
        let ang = ma + sa * normal();
        let rad = if conflict {
            let shift = (8.0 + 6.0 * normal().abs()) * (sr * sr + vp + s2).sqrt();
            if k % 2 == 0 { mr + shift } else { (mr - shift).max(0.1) }
        } else {
            mr + sr * normal()
        };
        let spread = (vp + s2).sqrt();
        let mp = [rad * ang.sin() + spread * normal(), rad * ang.cos() + spread * normal()];
        let cav = [
            Message::MvGaussian(MvGaussian::isotropic(&mp, vp)),
            Message::gaussian(ma, sa * sa),
            Message::gaussian(mr, sr * sr),
        ];
        let kind = FactorKind::Rotation { variance: s2 };
        let out = match kind.messages(&cav, InferenceMode::Ep, LinearRule::Exact, &q) {
            Ok(o) => o,
            Err(_) => {
                worst = f64::INFINITY;
                continue;
            }
        };

        // p | a, r ~ N(m, v) with v = (1/vp + 1/s2)^-1 per axis.
        let sl = vp + s2;
        let v_post = 1.0 / (1.0 / vp + 1.0 / s2);
        let ridge = sl.sqrt();
        let (a_nodes, _) = nodes(ma, sa, ridge / (3.0 * (mr + 8.0 * sr)), 20_000);
        // radius grid spans the cavity and the ring through the point
        let rho = (mp[0] * mp[0] + mp[1] * mp[1]).sqrt();
        let lo = (mr - 8.0 * sr).min(rho - 8.0 * ridge);
        let hi = (mr + 8.0 * sr).max(rho + 8.0 * ridge);
        let step = (ridge / 3.0).min(sr / 4.0);
        let (r_nodes, _) = nodes(0.5 * (lo + hi), (hi - lo) / 16.0, step, 20_000);
        // stats: a, a², r, r², px, py, px², py², pxpy
        let mut acc = Moments1::new(9);
        for &a in &a_nodes {
            let (sin, cos) = a.sin_cos();
            let la = ln_normal(a, ma, sa * sa);
            for &r in &r_nodes {
                let (fx, fy) = (r * sin, r * cos);
                let ll = ln_normal(fx, mp[0], sl) + ln_normal(fy, mp[1], sl);
                let px = v_post * (mp[0] / vp + fx / s2);
                let py = v_post * (mp[1] / vp + fy / s2);
                acc.add(
                    la + ln_normal(r, mr, sr * sr) + ll,
                    &[a, a * a, r, r * r, px, py, px * px + v_post, py * py + v_post, px * py],
                );
            }
        }
        let var = |m1: f64, m2: f64| m2 - m1 * m1;
        let a_e = scalar_error(
            tilted(&cav[1], &out[1].message).as_ref().and_then(scalar_moments),
            acc.mean(0),
            var(acc.mean(0), acc.mean(1)),
        );
        let r_e = scalar_error(
            tilted(&cav[2], &out[2].message).as_ref().and_then(scalar_moments),
            acc.mean(2),
            var(acc.mean(2), acc.mean(3)),
        );
        let (px, py) = (acc.mean(4), acc.mean(5));
        let cov = DMatrix::from_row_slice(
            2,
            2,
            &[
                var(px, acc.mean(6)),
                acc.mean(8) - px * py,
                acc.mean(8) - px * py,
                var(py, acc.mean(7)),
            ],
        );
        let p_e = match tilted(&cav[0], &out[0].message) {
            Some(t) => vector_error(&t, &[px, py], &cov),
            None => f64::INFINITY,
        };
        worst = worst.max(a_e).max(r_e).max(p_e);
    }
    verdict("rotation", worst, GRID_TOLERANCE, instances)
}

/// Standard normal CDF through the complementary error function.
fn phi(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Box factor in EP mode against a dense grid over `(cx, cy, l)`. Given
/// `l` the smoothed indicator factorises over the two axes, so each axis
/// is integrated on its own grid.
pub fn box_membership(seed: u64, instances: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0002);
    let q = QuadratureSpec::default();
    let w = BOX_EDGE_WIDTH;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let pixel = [rng.random_range(0.0..16.0), rng.random_range(0.0..16.0)];
        let (ml, sl) = (rng.random_range(3.0..10.0), log_uniform(&mut rng, 0.05, 2.0));
        let sc = [log_uniform(&mut rng, 0.05, 3.0), log_uniform(&mut rng, 0.05, 3.0)];
        let mc = [
            pixel[0] + rng.random_range(-0.7..0.7) * ml,
            pixel[1] + rng.random_range(-0.7..0.7) * ml,
        ];
        let pi = rng.random_range(0.05..0.95);
        let cav = [
            Message::Bernoulli(Bernoulli::from_probability(pi)),
            Message::MvGaussian(MvGaussian::diagonal(&mc, &[sc[0] * sc[0], sc[1] * sc[1]])),
            Message::gaussian(ml, sl * sl),
        ];
        let kind = FactorKind::BoxMembership {
            pixel,
            edge_width: w,
        };
        let out = match kind.messages(&cav, InferenceMode::Ep, LinearRule::Exact, &q) {
            Ok(o) => o,
            Err(_) => {
                worst = f64::INFINITY;
                continue;
            }
        };

        let (l_nodes, _) = nodes(ml, sl, (w / 2.0).min(sl / 8.0), 4000);
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..2)
            .map(|d| {
                let (xs, _) = nodes(mc[d], sc[d], w / 4.0, 40_000);
                let wts = xs.iter().map(|&x| ln_normal(x, mc[d], sc[d] * sc[d]).exp()).collect();
                (xs, wts)
            })
            .collect();
        let norm: Vec<f64> = axes.iter().map(|(_, w)| w.iter().sum()).collect();
        // stats: [s on, l, l², cx, cx², cy, cy²] accumulated with the tilted weight
        let mut acc = Moments1::new(7);
        for &l in &l_nodes {
            // per-axis E[I], E[c I], E[c² I] under the cavity
            let mut ax = [[0.0f64; 3]; 2];
            for d in 0..2 {
                let (xs, ws) = &axes[d];
                for (x, wt) in xs.iter().zip(ws) {
                    let off = x - pixel[d];
                    // a non-positive side is an empty box
                    let i = (phi((off + 0.5 * l) / w) - phi((off - 0.5 * l) / w)).max(0.0);
                    ax[d][0] += wt * i;
                    ax[d][1] += wt * i * x;
                    ax[d][2] += wt * i * x * x;
                }
                for v in &mut ax[d] {
                    *v /= norm[d];
                }
            }
            let inside = ax[0][0] * ax[1][0];
            let on = pi * inside;
            let off = (1.0 - pi) * (1.0 - inside);
            let mass = on + off;
            if mass <= 0.0 {
                continue;
            }
            // E[c_d · t] where t = π I + (1 - π)(1 - I)
            let moment = |d: usize, k: usize| -> f64 {
                let e = d ^ 1;
                let plain = if k == 1 { mc[d] } else { mc[d] * mc[d] + sc[d] * sc[d] };
                let with_i = ax[d][k] * ax[e][0];
                pi * with_i + (1.0 - pi) * (plain - with_i)
            };
            acc.add(
                ln_normal(l, ml, sl * sl) + mass.ln(),
                &[
                    on / mass,
                    l,
                    l * l,
                    moment(0, 1) / mass,
                    moment(0, 2) / mass,
                    moment(1, 1) / mass,
                    moment(1, 2) / mass,
                ],
            );
        }
        let var = |m1: f64, m2: f64| m2 - m1 * m1;
        let s_e = match tilted(&cav[0], &out[0].message) {
            Some(Message::Bernoulli(b)) => {
                let p = acc.mean(0);
                (b.probability() - p).abs() / p.min(1.0 - p).max(1e-6)
            }
            _ => f64::INFINITY,
        };
        let l_e = scalar_error(
            tilted(&cav[2], &out[2].message).as_ref().and_then(scalar_moments),
            acc.mean(1),
            var(acc.mean(1), acc.mean(2)),
        );
        let cov = DMatrix::from_row_slice(
            2,
            2,
            &[
                var(acc.mean(3), acc.mean(4)),
                0.0,
                0.0,
                var(acc.mean(5), acc.mean(6)),
            ],
        );
        let c_e = match tilted(&cav[1], &out[1].message) {
            Some(t) => vector_error(&t, &[acc.mean(3), acc.mean(5)], &cov),
            None => f64::INFINITY,
        };
        worst = worst.max(s_e).max(l_e).max(c_e);
    }
    verdict("box", worst, GRID_TOLERANCE, instances)
}

/// Gate factor in EP mode against dense grids over `(z, colour)` for each
/// branch. The colour of the inactive branch keeps its cavity.
pub fn gate(seed: u64, instances: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0003);
    let q = QuadratureSpec::default();
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let s2 = rng.random_range(0.005..0.05);
        let (mz, sz) = (rng.random_range(0.0..1.0), rng.random_range(0.05..0.5));
        let (mf, sf) = (rng.random_range(0.0..1.0), rng.random_range(0.05..0.5));
        let (mb, sb) = (rng.random_range(0.0..1.0), rng.random_range(0.05..0.5));
        let pi = rng.random_range(0.05..0.95);
        let cav = [
            Message::gaussian(mz, sz * sz),
            Message::Bernoulli(Bernoulli::from_probability(pi)),
            Message::gaussian(mf, sf * sf),
            Message::gaussian(mb, sb * sb),
        ];
        let kind = FactorKind::Gate { variance: s2 };
        let out = match kind.messages(&cav, InferenceMode::Ep, LinearRule::Exact, &q) {
            Ok(o) => o,
            Err(_) => {
                worst = f64::INFINITY;
                continue;
            }
        };
        let step = s2.sqrt() / 4.0;
        let (z_nodes, _) = nodes(mz, sz, step, 4000);
        // branch: (colour mean, colour sd) → (ln mass, E z, E z², E col, E col²)
        let branch = |mc: f64, sc: f64| -> (f64, [f64; 4]) {
            let (c_nodes, _) = nodes(mc, sc, step, 4000);
            let mut acc = Moments1::new(4);
            for &z in &z_nodes {
                let lz = ln_normal(z, mz, sz * sz);
                for &c in &c_nodes {
                    acc.add(lz + ln_normal(c, mc, sc * sc) + ln_normal(z, c, s2), &[z, z * z, c, c * c]);
                }
            }
            // cavity densities are normalised, so the sum approximates mass / (hz hc)
            let hz = z_nodes[1] - z_nodes[0];
            let hc = c_nodes[1] - c_nodes[0];
            let ln_mass = acc.max + acc.w.ln() + hz.ln() + hc.ln();
            (ln_mass, [acc.mean(0), acc.mean(1), acc.mean(2), acc.mean(3)])
        };
        let (lf, f) = branch(mf, sf);
        let (lb, b) = branch(mb, sb);
        let w1 = sigmoid(pi.ln() - (1.0 - pi).ln() + lf - lb);
        let w0 = 1.0 - w1;
        let mix = |x: f64, y: f64| w1 * x + w0 * y;
        let z_mean = mix(f[0], b[0]);
        let z_var = mix(f[1], b[1]) - z_mean * z_mean;
        let fg_mean = mix(f[2], mf);
        let fg_var = mix(f[3], mf * mf + sf * sf) - fg_mean * fg_mean;
        let bg_mean = mix(mb, b[2]);
        let bg_var = mix(mb * mb + sb * sb, b[3]) - bg_mean * bg_mean;

        let get = |i: usize| tilted(&cav[i], &out[i].message);
        let s_e = match get(1) {
            Some(Message::Bernoulli(t)) => (t.probability() - w1).abs() / w1.min(w0).max(1e-6),
            _ => f64::INFINITY,
        };
        let z_e = scalar_error(get(0).as_ref().and_then(scalar_moments), z_mean, z_var);
        let f_e = scalar_error(get(2).as_ref().and_then(scalar_moments), fg_mean, fg_var);
        let b_e = scalar_error(get(3).as_ref().and_then(scalar_moments), bg_mean, bg_var);
        worst = worst.max(s_e).max(z_e).max(f_e).max(b_e);
    }
    verdict("gate", worst, GRID_TOLERANCE, instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_reports_infinite_error_as_failure() {
        assert!(!verdict("x", f64::INFINITY, 1e-3, 1).passed);
        assert!(verdict("x", 5e-4, 1e-3, 1).passed);
    }
}
