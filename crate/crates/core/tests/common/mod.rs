//! Brute-force references shared by the integration tests.
//!
//! Nothing here calls into the library's own numerics: tilted moments come
//! from dense sums over uniform grids, and the chain posterior from
//! conditioning the joint Gaussian of latents and observations.
#![allow(dead_code)]

use std::f64::consts::PI;

use consensus_core::engine::{make_schedule, run_inference, EngineConfig, LogEntry, NoConsensus, Phase, Sweep};
use consensus_core::forest::{FeatureVector, NodeRecord, Row};
use consensus_core::models::{Model, ModelKind, ModelSpec};
use consensus_core::{Bernoulli, FactorKind, InferenceMode, LinearRule, Message, MvGaussian, QuadratureSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const GRID_TOLERANCE: f64 = 1e-3;

pub fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + (2.0 * PI * var).ln())
}

pub fn phi(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Uniform nodes on `[lo, hi]` no coarser than `step`, at most `cap`.
pub fn span(lo: f64, hi: f64, step: f64, cap: usize) -> Vec<f64> {
    let n = (((hi - lo) / step).ceil() as usize + 1).clamp(64, cap);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + h * i as f64).collect()
}

/// Running weighted means of several statistics, with weights given as logs.
pub struct WeightedMeans {
    shift: f64,
    total: f64,
    sums: Vec<f64>,
}

impl WeightedMeans {
    pub fn new(k: usize) -> Self {
        WeightedMeans {
            shift: f64::NEG_INFINITY,
            total: 0.0,
            sums: vec![0.0; k],
        }
    }

    pub fn push(&mut self, ln_w: f64, stats: &[f64]) {
        if !ln_w.is_finite() {
            return;
        }
        if ln_w > self.shift {
            let r = (self.shift - ln_w).exp();
            self.total *= r;
            self.sums.iter_mut().for_each(|s| *s *= r);
            self.shift = ln_w;
        }
        let w = (ln_w - self.shift).exp();
        self.total += w;
        for (s, x) in self.sums.iter_mut().zip(stats) {
            *s += w * x;
        }
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.sums[k] / self.total
    }

    /// Log of the summed weight.
    pub fn ln_total(&self) -> f64 {
        self.shift + self.total.ln()
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `cavity × message`: the library's tilted distribution on one edge.
fn tilted(cavity: &Message, out: &Message) -> Option<Message> {
    cavity.multiply(out).ok()
}

/// `|Δmean| / sd` and `|Δvar| / var` on the reference scale.
fn scalar_gap(got: Option<Message>, mean: f64, var: f64) -> f64 {
    match got {
        Some(Message::Gaussian(g)) if g.is_proper() => {
            ((g.mean() - mean).abs() / var.sqrt()).max((g.variance() - var).abs() / var)
        }
        _ => f64::INFINITY,
    }
}

fn vector_gap(got: Option<Message>, mean: &[f64], cov: &DMatrix<f64>, full: bool) -> f64 {
    let Some(Message::MvGaussian(g)) = got else {
        return f64::INFINITY;
    };
    let (Some(m), Some(c)) = (g.mean(), g.covariance()) else {
        return f64::INFINITY;
    };
    let mut worst = 0.0f64;
    for i in 0..mean.len() {
        worst = worst.max((m[i] - mean[i]).abs() / cov[(i, i)].sqrt());
        worst = worst.max((c[(i, i)] - cov[(i, i)]).abs() / cov[(i, i)]);
        if full {
            for j in 0..i {
                let scale = (cov[(i, i)] * cov[(j, j)]).sqrt();
                worst = worst.max((c[(i, j)] - cov[(i, j)]).abs() / scale);
            }
        }
    }
    worst
}

fn probability_gap(got: Option<Message>, p: f64) -> f64 {
    match got {
        Some(Message::Bernoulli(b)) => (b.probability() - p).abs() / p.min(1.0 - p).max(1e-6),
        _ => f64::INFINITY,
    }
}

/// Worst error of the rotation factor's tilted moments over `n` instances.
/// Every third instance puts the point far from a sharp radius cavity under
/// a flat angle.
pub fn rotation_worst(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = QuadratureSpec::default();
    let mut worst = 0.0f64;
    for k in 0..n {
        let conflict = k % 3 == 2;
        let s2 = if conflict { rng.random_range(0.001..0.01) } else { rng.random_range(0.01..0.1) };
        let sa = if conflict { log_uniform(&mut rng, 3.0, 10.0) } else { log_uniform(&mut rng, 0.02, 2.0) };
        let ma = rng.random_range(-PI..PI);
        let mr = rng.random_range(0.5..3.0);
        let sr = if conflict { log_uniform(&mut rng, 0.02, 0.1) } else { log_uniform(&mut rng, 0.02, 0.5) };
        let vp = if conflict { log_uniform(&mut rng, 0.001, 0.02) } else { log_uniform(&mut rng, 0.001, 0.5) };
        let ang = ma + sa * normal(&mut rng);
        let rad = if conflict {
            let shift = (8.0 + 6.0 * normal(&mut rng).abs()) * (sr * sr + vp + s2).sqrt();
            if k % 2 == 0 { mr + shift } else { (mr - shift).max(0.1) }
        } else {
            mr + sr * normal(&mut rng)
        };
        let spread = (vp + s2).sqrt();
        let mp = [
            rad * ang.sin() + spread * normal(&mut rng),
            rad * ang.cos() + spread * normal(&mut rng),
        ];
        let cav = [
            Message::MvGaussian(MvGaussian::isotropic(&mp, vp)),
            Message::gaussian(ma, sa * sa),
            Message::gaussian(mr, sr * sr),
        ];
        let Ok(out) = FactorKind::Rotation { variance: s2 }.messages(&cav, InferenceMode::Ep, LinearRule::Exact, &q)
        else {
            return f64::INFINITY;
        };

        // p given (a, r) is Gaussian, so only (a, r) needs a grid.
        let sl = vp + s2;
        let vpost = 1.0 / (1.0 / vp + 1.0 / s2);
        let ridge = sl.sqrt();
        let rho = mp[0].hypot(mp[1]);
        let r_lo = (mr - 8.0 * sr).min(rho - 8.0 * ridge);
        let r_hi = (mr + 8.0 * sr).max(rho + 8.0 * ridge);
        let rs = span(r_lo, r_hi, (ridge / 3.0).min(sr / 4.0), 20_000);
        let r_max = r_lo.abs().max(r_hi.abs());
        let as_ = span(ma - 8.0 * sa, ma + 8.0 * sa, ridge / (3.0 * r_max), 20_000);
        let mut acc = WeightedMeans::new(9);
        for &a in &as_ {
            let (sin, cos) = a.sin_cos();
            let la = ln_normal(a, ma, sa * sa);
            for &r in &rs {
                let f = [r * sin, r * cos];
                let ll = ln_normal(f[0], mp[0], sl) + ln_normal(f[1], mp[1], sl);
                let px = vpost * (mp[0] / vp + f[0] / s2);
                let py = vpost * (mp[1] / vp + f[1] / s2);
                acc.push(
                    la + ln_normal(r, mr, sr * sr) + ll,
                    &[a, a * a, r, r * r, px, py, px * px + vpost, py * py + vpost, px * py],
                );
            }
        }
        let var = |m: f64, m2: f64| m2 - m * m;
        let a_gap = scalar_gap(tilted(&cav[1], &out[1].message), acc.mean(0), var(acc.mean(0), acc.mean(1)));
        let r_gap = scalar_gap(tilted(&cav[2], &out[2].message), acc.mean(2), var(acc.mean(2), acc.mean(3)));
        let (px, py) = (acc.mean(4), acc.mean(5));
        let cxy = acc.mean(8) - px * py;
        let cov = DMatrix::from_row_slice(2, 2, &[var(px, acc.mean(6)), cxy, cxy, var(py, acc.mean(7))]);
        let p_gap = vector_gap(tilted(&cav[0], &out[0].message), &[px, py], &cov, true);
        worst = worst.max(a_gap).max(r_gap).max(p_gap);
    }
    worst
}

/// Worst error of the box-membership factor over `n` instances. The
/// indicator of each axis is the difference of two probit edges; a
/// non-positive side is an empty box.
pub fn box_worst(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = QuadratureSpec::default();
    let w = consensus_core::factors::BOX_EDGE_WIDTH;
    let mut worst = 0.0f64;
    for _ in 0..n {
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
        let kind = FactorKind::BoxMembership { pixel, edge_width: w };
        let Ok(out) = kind.messages(&cav, InferenceMode::Ep, LinearRule::Exact, &q) else {
            return f64::INFINITY;
        };

        // Given l the indicator factorises over axes, so each axis is summed
        // on its own grid and the (cx, cy) double sum is a product.
        let ls = span(ml - 8.0 * sl, ml + 8.0 * sl, (w / 2.0).min(sl / 8.0), 4000);
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..2)
            .map(|d| {
                let xs = span(mc[d] - 8.0 * sc[d], mc[d] + 8.0 * sc[d], w / 4.0, 40_000);
                let raw: Vec<f64> = xs.iter().map(|&x| ln_normal(x, mc[d], sc[d] * sc[d]).exp()).collect();
                let z: f64 = raw.iter().sum();
                (xs, raw.into_iter().map(|v| v / z).collect())
            })
            .collect();
        // stats: s on, l, l², cx, cx², cy, cy²
        let mut acc = WeightedMeans::new(7);
        for &l in &ls {
            // [E I, E c I, E c² I] per axis
            let mut e = [[0.0f64; 3]; 2];
            for d in 0..2 {
                for (x, wt) in axes[d].0.iter().zip(&axes[d].1) {
                    let o = x - pixel[d];
                    let ind = if l > 0.0 { phi((o + 0.5 * l) / w) - phi((o - 0.5 * l) / w) } else { 0.0 };
                    e[d][0] += wt * ind;
                    e[d][1] += wt * ind * x;
                    e[d][2] += wt * ind * x * x;
                }
            }
            let inside = e[0][0] * e[1][0];
            let on = pi * inside;
            let mass = on + (1.0 - pi) * (1.0 - inside);
            if mass <= 0.0 {
                continue;
            }
            let moment = |d: usize, k: usize| {
                let plain = if k == 1 { mc[d] } else { mc[d] * mc[d] + sc[d] * sc[d] };
                let with = e[d][k] * e[d ^ 1][0];
                pi * with + (1.0 - pi) * (plain - with)
            };
            acc.push(
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
        let var = |m: f64, m2: f64| m2 - m * m;
        let s_gap = probability_gap(tilted(&cav[0], &out[0].message), acc.mean(0));
        let l_gap = scalar_gap(tilted(&cav[2], &out[2].message), acc.mean(1), var(acc.mean(1), acc.mean(2)));
        let cov = DMatrix::from_row_slice(
            2,
            2,
            &[var(acc.mean(3), acc.mean(4)), 0.0, 0.0, var(acc.mean(5), acc.mean(6))],
        );
        // centre messages are per-axis, so only the diagonal is compared
        let c_gap = vector_gap(tilted(&cav[1], &out[1].message), &[acc.mean(3), acc.mean(5)], &cov, false);
        worst = worst.max(s_gap).max(l_gap).max(c_gap);
    }
    worst
}

/// Worst error of the gate factor in EP over `n` instances. Each branch is
/// a 2-D sum over `(z, active colour)`; the other colour keeps its cavity.
pub fn gate_worst(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = QuadratureSpec::default();
    let mut worst = 0.0f64;
    for _ in 0..n {
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
        let Ok(out) = FactorKind::Gate { variance: s2 }.messages(&cav, InferenceMode::Ep, LinearRule::Exact, &q) else {
            return f64::INFINITY;
        };
        let step = s2.sqrt() / 4.0;
        let zs = span(mz - 8.0 * sz, mz + 8.0 * sz, step, 4000);
        // (ln evidence, [E z, E z², E c, E c²]) of one branch
        let branch = |mc: f64, sc: f64| {
            let cs = span(mc - 8.0 * sc, mc + 8.0 * sc, step, 4000);
            let mut acc = WeightedMeans::new(4);
            for &z in &zs {
                for &c in &cs {
                    let lw = ln_normal(z, mz, sz * sz) + ln_normal(c, mc, sc * sc) + ln_normal(z, c, s2);
                    acc.push(lw, &[z, z * z, c, c * c]);
                }
            }
            let cell = (zs[1] - zs[0]) * (cs[1] - cs[0]);
            (acc.ln_total() + cell.ln(), [acc.mean(0), acc.mean(1), acc.mean(2), acc.mean(3)])
        };
        let (ef, f) = branch(mf, sf);
        let (eb, b) = branch(mb, sb);
        let on = 1.0 / (1.0 + ((1.0 - pi).ln() + eb - pi.ln() - ef).exp());
        let mix = |x: f64, y: f64| on * x + (1.0 - on) * y;
        let zm = mix(f[0], b[0]);
        let fm = mix(f[2], mf);
        let bm = mix(mb, b[2]);
        let z_gap = scalar_gap(tilted(&cav[0], &out[0].message), zm, mix(f[1], b[1]) - zm * zm);
        let s_gap = probability_gap(tilted(&cav[1], &out[1].message), on);
        let f_gap = scalar_gap(tilted(&cav[2], &out[2].message), fm, mix(f[3], mf * mf + sf * sf) - fm * fm);
        let b_gap = scalar_gap(tilted(&cav[3], &out[3].message), bm, mix(mb * mb + sb * sb, b[3]) - bm * bm);
        worst = worst.max(z_gap).max(s_gap).max(f_gap).max(b_gap);
    }
    worst
}

/// Posterior (mean, variance) of `[y1, y2, y3, d1, d2]` for the chain
/// `y2 = y3 + d2`, `y1 = y2 + d1`, `x_k = y1 + N(0, noise)`, by
/// conditioning the joint Gaussian of `(y3, d2, d1, x)` on `x`.
pub fn chain_oracle(priors: [(f64, f64); 3], noise: f64, xs: &[f64]) -> [(f64, f64); 5] {
    let n = xs.len();
    let dim = 3 + n;
    // every variable is a linear map of (y3, d2, d1, e_1..e_n)
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut mu0 = DVector::<f64>::zeros(dim);
    let mut sd = DVector::<f64>::zeros(dim);
    for i in 0..3 {
        a[(i, i)] = 1.0;
        mu0[i] = priors[i].0;
        sd[i] = priors[i].1.sqrt();
    }
    for k in 0..n {
        for i in 0..3 {
            a[(3 + k, i)] = 1.0;
        }
        a[(3 + k, 3 + k)] = 1.0;
        sd[3 + k] = noise.sqrt();
    }
    let scaled = &a * DMatrix::from_diagonal(&sd);
    let cov = &scaled * scaled.transpose();
    let mean = &a * &mu0;
    let sxx = cov.view((3, 3), (n, n)).clone_owned();
    let szx = cov.view((0, 3), (3, n)).clone_owned();
    let szz = cov.view((0, 0), (3, 3)).clone_owned();
    let gain = &szx * sxx.try_inverse().expect("noise keeps the block invertible");
    let resid = DVector::from_column_slice(xs) - mean.rows(3, n);
    let post_mean = mean.rows(0, 3) + &gain * resid;
    let post_cov = &szz - &gain * szx.transpose();
    let lin = |w: [f64; 3]| {
        let w = DVector::from_column_slice(&w);
        (w.dot(&post_mean), (w.transpose() * &post_cov * &w)[(0, 0)])
    };
    [
        lin([1.0, 1.0, 1.0]),
        lin([1.0, 1.0, 0.0]),
        lin([1.0, 0.0, 0.0]),
        lin([0.0, 0.0, 1.0]),
        lin([0.0, 1.0, 0.0]),
    ]
}

/// Schedule rules on an executed log: consensus only in the upward sweep of
/// iteration 1 and never after a standard update of the same layer; layers
/// never decrease on the way up nor increase on the way down; no upward
/// step after the downward sweep has started.
pub fn schedule_violation(log: &[LogEntry]) -> Option<String> {
    let mut by_iteration: Vec<(usize, Vec<&LogEntry>)> = Vec::new();
    for e in log {
        match by_iteration.last_mut() {
            Some((it, v)) if *it == e.iteration => v.push(e),
            _ => by_iteration.push((e.iteration, vec![e])),
        }
    }
    for (it, entries) in &by_iteration {
        let down_from = entries.iter().position(|e| e.sweep == Sweep::Down).unwrap_or(entries.len());
        if entries[down_from..].iter().any(|e| e.sweep == Sweep::Up) {
            return Some(format!("iteration {it}: upward step after the downward sweep"));
        }
        let (up, down) = entries.split_at(down_from);
        if up.windows(2).any(|w| w[1].layer < w[0].layer) {
            return Some(format!("iteration {it}: upward sweep goes down a layer"));
        }
        if down.windows(2).any(|w| w[1].layer > w[0].layer) {
            return Some(format!("iteration {it}: downward sweep goes up a layer"));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.phase != Phase::Consensus {
                continue;
            }
            if *it != 1 || e.sweep != Sweep::Up {
                return Some(format!("iteration {it}: consensus outside the first upward sweep"));
            }
            let late = entries[..i]
                .iter()
                .any(|p| p.phase == Phase::Standard && p.sweep == Sweep::Up && p.layer == e.layer);
            if late {
                return Some(format!("iteration {it}: consensus after standard messages in layer {}", e.layer));
            }
        }
    }
    None
}

pub fn chain() -> (consensus_core::models::ChainSpec, consensus_core::graph::FactorGraph) {
    let Ok(Model::Chain(spec)) = Model::from_spec(&ModelSpec::new(ModelKind::Chain)) else {
        panic!("default chain spec")
    };
    let graph = Model::Chain(spec.clone()).build_graph();
    (spec, graph)
}

/// Largest mean or variance gap to the closed form after 20 iterations.
pub fn chain_worst_gap(mode: InferenceMode, problems: u64) -> f64 {
    let (spec, graph) = chain();
    let names = ["y1", "y2", "y3", "d1", "d2"];
    let tracked: Vec<usize> = names.iter().map(|n| graph.index_of(n).unwrap()).collect();
    let schedule = make_schedule(&graph, &[]).unwrap();
    let priors = [&spec.top, &spec.upper_offset, &spec.lower_offset].map(|p| (p.mean[0], p.variance));
    let mut worst = 0.0f64;
    for seed in 0..problems {
        let sample = spec.sample(seed);
        let xs: Vec<f64> = (0..spec.observations).map(|k| sample.observations[&format!("x[{k}]")][0]).collect();
        let truth = chain_oracle(priors, spec.noise_variance, &xs);
        let g = graph.condition(&sample.observation_messages()).unwrap();
        let cfg = EngineConfig {
            iterations: 20,
            mode,
            ..EngineConfig::default()
        };
        let trace = run_inference(&g, &cfg, &schedule, &tracked, &mut NoConsensus).unwrap();
        for (k, &(m, v)) in truth.iter().enumerate() {
            let Message::Gaussian(b) = &trace.iterations[20].beliefs[k] else {
                panic!("{} is not a scalar Gaussian", names[k])
            };
            worst = worst.max((b.mean() - m).abs()).max((b.variance() - v).abs());
        }
    }
    worst
}

pub const RIDGE: f64 = 1e-6;

pub fn row(tree: Vec<f64>, regression: Vec<f64>, target: Vec<f64>) -> Row {
    let q = target.len();
    Row {
        features: FeatureVector { tree, regression },
        target,
        covariance: vec![0.0; q * q],
    }
}

/// Targets `W0 · [r, 1]` with no noise; tree features equal the regression features.
pub fn linear_rows(n: usize, w0: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Vec<Row> {
    let p = w0.ncols() - 1;
    (0..n)
        .map(|_| {
            let r: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut x = r.clone();
            x.push(1.0);
            let y = w0 * DVector::from_vec(x);
            row(r.clone(), r, y.iter().copied().collect())
        })
        .collect()
}

pub fn design(rows: &[Row], idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = rows[0].features.regression.len() + 1;
    let q = rows[0].target.len();
    let x = DMatrix::from_fn(idx.len(), p, |i, j| {
        let r = &rows[idx[i]].features.regression;
        if j < p - 1 { r[j] } else { 1.0 }
    });
    let y = DMatrix::from_fn(idx.len(), q, |i, j| rows[idx[i]].target[j]);
    (x, y)
}

/// Summed squared residual of a ridge fit with an unpenalised bias, solved
/// by QR on the system augmented with `sqrt(λ)·I` rows.
pub fn fit_residual(rows: &[Row], idx: &[usize]) -> f64 {
    let (x, y) = design(rows, idx);
    let (n, p) = x.shape();
    let mut xa = DMatrix::zeros(n + p - 1, p);
    xa.view_mut((0, 0), (n, p)).copy_from(&x);
    for j in 0..p - 1 {
        xa[(n + j, j)] = RIDGE.sqrt();
    }
    let mut ya = DMatrix::zeros(n + p - 1, y.ncols());
    ya.view_mut((0, 0), (n, y.ncols())).copy_from(&y);
    let qr = xa.qr();
    let w = qr.r().solve_upper_triangular(&(qr.q().transpose() * &ya)).expect("full rank");
    (&y - &x * &w).iter().map(|e| e * e).sum()
}

pub fn objective(rows: &[Row], record: &NodeRecord, c: usize, min_leaf: usize) -> Option<f64> {
    let split = &record.candidates[c];
    let (left, right): (Vec<usize>, Vec<usize>) =
        record.examples.iter().partition(|&&i| split.goes_left(&rows[i].features.tree));
    if left.len() < min_leaf || right.len() < min_leaf {
        return None;
    }
    Some(-fit_residual(rows, &left) - fit_residual(rows, &right))
}

/// Two regimes with different linear maps, split by the sign of a tree feature.
pub fn two_regimes(n: usize, noise: f64, seed: u64) -> Vec<Row> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let y = if t[0] <= 0.0 { 2.0 * r[0] - r[1] + 1.0 } else { -r[0] + 3.0 * r[1] - 2.0 };
            row(t, r, vec![y + noise * rng.random_range(-1.0..1.0)])
        })
        .collect()
}

/// Checks every recorded node: the chosen candidate is admissible and no
/// admissible candidate scores higher. Returns the nodes checked and the
/// first violation.
pub fn split_violations(rows: &[Row], records: &[Vec<NodeRecord>], min_leaf: usize) -> (usize, Option<String>) {
    let mut checked = 0;
    for (t, tree) in records.iter().enumerate() {
        for (n, node) in tree.iter().enumerate() {
            let scores: Vec<Option<f64>> =
                (0..node.candidates.len()).map(|c| objective(rows, node, c, min_leaf)).collect();
            match node.chosen {
                Some(c) => {
                    let Some(best) = scores[c] else {
                        return (checked, Some(format!("tree {t} node {n}: chosen split is inadmissible")));
                    };
                    if let Some(s) = scores.iter().flatten().find(|&&s| best < s - 1e-9 * (1.0 + s.abs())) {
                        return (checked, Some(format!("tree {t} node {n}: chosen {best} < candidate {s}")));
                    }
                    checked += 1;
                }
                None if scores.iter().any(Option::is_some) => {
                    return (checked, Some(format!("tree {t} node {n}: admissible split left unused")));
                }
                None => {}
            }
        }
    }
    (checked, None)
}
