//! Numerical integration helpers for the non-conjugate factors.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Resolution of the adaptive trapezoid rules. Each axis is covered by a
/// window of `window_sigmas` of its narrowest scale around the region that
/// carries mass, with `nodes_per_sigma` nodes per scale length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuadratureSpec {
    pub nodes_per_sigma: f64,
    pub window_sigmas: f64,
    pub max_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes_per_sigma: 2.0,
            window_sigmas: 8.0,
            max_nodes: 1024,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.nodes_per_sigma >= 1.0) {
            return Err(format!(
                "nodesPerSigma must be >= 1, got {}",
                self.nodes_per_sigma
            ));
        }
        if !(self.window_sigmas >= 4.0) {
            return Err(format!(
                "windowSigmas must be >= 4, got {}",
                self.window_sigmas
            ));
        }
        if self.max_nodes < 3 {
            return Err("maxNodes must be >= 3".into());
        }
        Ok(())
    }
}

/// Equally spaced nodes `start + i * step` for `i < n`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Grid {
    pub start: f64,
    pub step: f64,
    pub n: usize,
}

impl Grid {
    /// Covers `[lo, hi]` with spacing at most `scale / nodes_per_sigma`.
    pub fn cover(lo: f64, hi: f64, scale: f64, spec: &QuadratureSpec) -> Grid {
        let width = (hi - lo).max(0.0);
        if width == 0.0 || !(scale > 0.0) {
            return Grid {
                start: 0.5 * (lo + hi),
                step: 0.0,
                n: 1,
            };
        }
        let want = (width / scale * spec.nodes_per_sigma).ceil() as usize + 1;
        let n = want.clamp(3, spec.max_nodes);
        Grid {
            start: lo,
            step: width / (n - 1) as f64,
            n,
        }
    }

    /// `n` nodes spanning exactly one period starting at `start`.
    pub fn periodic(start: f64, scale: f64, spec: &QuadratureSpec) -> Grid {
        let want = (2.0 * PI / scale * spec.nodes_per_sigma).ceil() as usize;
        let n = want.clamp(32, spec.max_nodes);
        Grid {
            start,
            step: 2.0 * PI / n as f64,
            n,
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn normal_ccdf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

pub fn ln_normal_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / variance + (2.0 * PI * variance).ln())
}

/// `(Φ(hi) - Φ(lo), 1 - (Φ(hi) - Φ(lo)))` with both parts accurate in the tails.
pub fn interval_probability(lo: f64, hi: f64) -> (f64, f64) {
    if hi <= lo {
        return (0.0, 1.0);
    }
    let inside = if lo > 0.0 {
        normal_ccdf(lo) - normal_ccdf(hi)
    } else if hi < 0.0 {
        normal_cdf(hi) - normal_cdf(lo)
    } else {
        1.0 - normal_cdf(lo) - normal_ccdf(hi)
    };
    let outside = normal_cdf(lo) + normal_ccdf(hi);
    (inside.max(0.0), outside.min(1.0))
}

/// Running weighted sums in log space; weights are supplied as logarithms.
#[derive(Clone, Debug)]
pub(crate) struct LogAccumulator {
    max: f64,
    pub total: f64,
    pub sums: Vec<f64>,
}

impl LogAccumulator {
    pub fn new(stats: usize) -> Self {
        LogAccumulator {
            max: f64::NEG_INFINITY,
            total: 0.0,
            sums: vec![0.0; stats],
        }
    }

    pub fn add(&mut self, ln_w: f64, values: &[f64]) {
        if ln_w == f64::NEG_INFINITY || ln_w.is_nan() {
            return;
        }
        if ln_w > self.max {
            let r = (self.max - ln_w).exp();
            self.total *= r;
            for s in &mut self.sums {
                *s *= r;
            }
            self.max = ln_w;
        }
        let w = (ln_w - self.max).exp();
        self.total += w;
        for (s, v) in self.sums.iter_mut().zip(values) {
            *s += w * v;
        }
    }

    /// Weighted means of the statistics, or `None` when no mass was seen.
    pub fn means(&self) -> Option<Vec<f64>> {
        if !(self.total > 0.0) {
            return None;
        }
        Some(self.sums.iter().map(|s| s / self.total).collect())
    }

    /// Log of the summed weights.
    pub fn ln_total(&self) -> f64 {
        self.max + self.total.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_probability_tails() {
        let (inside, outside) = interval_probability(9.0, 10.0);
        assert!(inside > 0.0 && inside < 1e-18);
        assert!((outside - 1.0).abs() < 1e-15);
        let (inside, outside) = interval_probability(-10.0, 10.0);
        assert!((inside - 1.0).abs() < 1e-15);
        assert!(outside > 0.0 && outside < 1e-20);
    }

    #[test]
    fn trapezoid_integrates_gaussian() {
        let spec = QuadratureSpec::default();
        let g = Grid::cover(-8.0, 8.0, 1.0, &spec);
        let total: f64 = (0..g.n).map(|i| normal_pdf(g.node(i)) * g.step).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_accumulator_survives_underflow() {
        let mut acc = LogAccumulator::new(1);
        acc.add(-2000.0, &[1.0]);
        acc.add(-2000.0 + 2f64.ln(), &[4.0]);
        let m = acc.means().unwrap();
        assert!((m[0] - 3.0).abs() < 1e-12);
    }
}
