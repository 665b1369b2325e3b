//! Featurizers turning context marginals into forest inputs.
//!
//! Every featurizer is total: any proper context yields finite features.
//! Grid contexts arrive in row-major order, which is the natural order of
//! their ids.

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::expfam::Message;
use crate::forest::FeatureVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Featurizer {
    /// Circle centre from point marginals.
    CircleCentre,
    /// Circle radius from the centred point marginals.
    CircleRadius,
    /// Square colours from pixel marginals.
    SquareColour { width: usize, height: usize },
    /// Square side from the segmentation marginals.
    SideLength { width: usize, height: usize },
    /// Square centre from the segmentation marginals.
    SquareCentre { width: usize, height: usize },
    /// Reflectance of one pixel from a patch of pixel marginals.
    Reflectance {
        width: usize,
        height: usize,
        radius: usize,
    },
    /// Light from block averages of shading marginals.
    Light {
        width: usize,
        height: usize,
        blocks: usize,
    },
}

fn scalar_means(context: &[Message]) -> Vec<f64> {
    context
        .iter()
        .map(|m| m.scalar_mean().filter(|v| v.is_finite()).unwrap_or(0.0))
        .collect()
}

fn point_means(context: &[Message]) -> Vec<[f64; 2]> {
    context
        .iter()
        .map(|m| match m.mean() {
            Some(v) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => [v[0], v[1]],
            _ => [0.0, 0.0],
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Algebraic least-squares circle fit. Falls back to the centroid and mean
/// distance when the points are degenerate.
pub fn kasa_fit(points: &[[f64; 2]]) -> ([f64; 2], f64) {
    let n = points.len() as f64;
    let centroid = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let spread = |c: [f64; 2]| {
        points
            .iter()
            .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt())
            .sum::<f64>()
            / n
    };
    let fallback = (centroid, spread(centroid));
    if points.len() < 3 {
        return fallback;
    }
    // Centre the data for conditioning.
    let mut a = Matrix3::<f64>::zeros();
    let mut b = Vector3::<f64>::zeros();
    for p in points {
        let (x, y) = (p[0] - centroid[0], p[1] - centroid[1]);
        let row = Vector3::new(x, y, 1.0);
        a += row * row.transpose();
        b -= row * (x * x + y * y);
    }
    let Some(sol) = a.cholesky().map(|c| c.solve(&b)) else {
        return fallback;
    };
    let centre = [centroid[0] - sol[0] / 2.0, centroid[1] - sol[1] / 2.0];
    let r2 = (sol[0] * sol[0] + sol[1] * sol[1]) / 4.0 - sol[2];
    if !(r2 > 0.0) || centre.iter().any(|v| !v.is_finite()) {
        return fallback;
    }
    (centre, r2.sqrt())
}

/// Low and high cluster means by 1-D two-means, plus the high share.
fn two_means(values: &[f64]) -> (f64, f64, f64) {
    let lo0 = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi0 = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi0 > lo0) {
        let m = mean(values);
        return (m, m, 0.5);
    }
    let (mut lo, mut hi) = (lo0, hi0);
    let mut share = 0.5;
    for _ in 0..50 {
        let cut = 0.5 * (lo + hi);
        let (mut sl, mut nl, mut sh, mut nh) = (0.0, 0usize, 0.0, 0usize);
        for &v in values {
            if v > cut {
                sh += v;
                nh += 1;
            } else {
                sl += v;
                nl += 1;
            }
        }
        let (nlo, nhi) = (sl / nl.max(1) as f64, sh / nh.max(1) as f64);
        share = nh as f64 / values.len() as f64;
        if nlo == lo && nhi == hi {
            break;
        }
        lo = nlo;
        hi = nhi;
    }
    (lo, hi, share)
}

/// Row sums, column sums and total of a row-major grid.
fn marginals(p: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let mut rows = vec![0.0; height];
    let mut cols = vec![0.0; width];
    for i in 0..height {
        for j in 0..width {
            rows[i] += p[i * width + j];
            cols[j] += p[i * width + j];
        }
    }
    let total = rows.iter().sum();
    (rows, cols, total)
}

/// `Σ v / max v`: the extent of a mass profile in cells.
fn span(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        v.iter().sum::<f64>() / max
    } else {
        0.0
    }
}

impl Featurizer {
    /// Tree-feature range open to pixel-pair tests.
    pub fn pair_block(&self) -> Option<[usize; 2]> {
        match self {
            Featurizer::SquareColour { width, height } => Some([0, width * height]),
            _ => None,
        }
    }

    /// Features for target `target` (always 0 for single-target predictors).
    pub fn features(&self, context: &[Message], target: usize) -> FeatureVector {
        let fv = match *self {
            Featurizer::CircleCentre => circle_centre(context),
            Featurizer::CircleRadius => circle_radius(context),
            Featurizer::SquareColour { .. } => {
                let means = scalar_means(context);
                let (lo, hi, share) = two_means(&means);
                let mut tree = means.clone();
                tree.extend([lo, hi, share, mean(&means)]);
                FeatureVector {
                    tree,
                    regression: vec![lo, hi, share],
                }
            }
            Featurizer::SideLength { width, height } => {
                let p = scalar_means(context);
                let (rows, cols, m) = marginals(&p, width, height);
                let (sr, sc) = (span(&rows), span(&cols));
                let max_r = rows.iter().copied().fold(0.0, f64::max);
                let max_c = cols.iter().copied().fold(0.0, f64::max);
                FeatureVector {
                    tree: vec![m, m.sqrt(), sr, sc, max_r, max_c],
                    regression: vec![m.sqrt(), sr, sc],
                }
            }
            Featurizer::SquareCentre { width, height } => {
                let p = scalar_means(context);
                let (rows, cols, m) = marginals(&p, width, height);
                let weighted = |v: &[f64], fallback: f64| {
                    if m > 1e-9 {
                        v.iter().enumerate().map(|(k, w)| (k as f64 + 0.5) * w).sum::<f64>() / m
                    } else {
                        fallback
                    }
                };
                let cx = weighted(&cols, width as f64 / 2.0);
                let cy = weighted(&rows, height as f64 / 2.0);
                FeatureVector {
                    tree: vec![cx, cy, m, span(&rows), span(&cols)],
                    regression: vec![cx, cy],
                }
            }
            Featurizer::Reflectance {
                width,
                height,
                radius,
            } => reflectance(&scalar_means(context), width, height, radius, target),
            Featurizer::Light {
                width,
                height,
                blocks,
            } => light(&scalar_means(context), width, height, blocks),
        };
        sanitize(fv)
    }
}

fn sanitize(mut fv: FeatureVector) -> FeatureVector {
    for v in fv.tree.iter_mut().chain(fv.regression.iter_mut()) {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    fv
}

fn circle_centre(context: &[Message]) -> FeatureVector {
    let pts = point_means(context);
    let n = pts.len().max(1) as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut cov = Matrix2::<f64>::zeros();
    for p in &pts {
        let d = nalgebra::Vector2::new(p[0] - cx, p[1] - cy);
        cov += d * d.transpose() / n;
    }
    let eig = cov.symmetric_eigenvalues();
    let (e_lo, e_hi) = (eig.min(), eig.max());
    let fold = |k: usize, f: fn(f64, f64) -> f64, init: f64| pts.iter().map(|p| p[k]).fold(init, f);
    let mean_var = mean(
        &context
            .iter()
            .map(|m| m.variances().map(|v| mean(&v)).unwrap_or(0.0))
            .collect::<Vec<_>>(),
    );
    let (k, kr) = kasa_fit(&pts);
    FeatureVector {
        tree: vec![
            cx,
            cy,
            e_lo,
            e_hi,
            fold(0, f64::min, f64::INFINITY),
            fold(0, f64::max, f64::NEG_INFINITY),
            fold(1, f64::min, f64::INFINITY),
            fold(1, f64::max, f64::NEG_INFINITY),
            mean_var,
            k[0],
            k[1],
            kr,
        ],
        regression: vec![cx, cy, k[0], k[1]],
    }
}

fn circle_radius(context: &[Message]) -> FeatureVector {
    let pts = point_means(context);
    let mut norms: Vec<f64> = pts.iter().map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).collect();
    let m = mean(&norms);
    let sd = (norms.iter().map(|v| (v - m).powi(2)).sum::<f64>() / norms.len().max(1) as f64).sqrt();
    let (_, kr) = kasa_fit(&pts);
    let med = median(&mut norms);
    FeatureVector {
        tree: vec![m, med, kr, sd],
        regression: vec![m, kr],
    }
}

fn reflectance(z: &[f64], width: usize, height: usize, radius: usize, target: usize) -> FeatureVector {
    let (i, j) = (target / width, target % width);
    let at = |a: usize, b: usize| z[a * width + b];
    let (r0, r1) = (i.saturating_sub(radius), (i + radius).min(height - 1));
    let (c0, c1) = (j.saturating_sub(radius), (j + radius).min(width - 1));
    let mut patch = Vec::new();
    let (mut left, mut right, mut up, mut down) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for a in r0..=r1 {
        for b in c0..=c1 {
            let v = at(a, b);
            patch.push(v);
            if b < j {
                left.push(v);
            } else if b > j {
                right.push(v);
            }
            if a < i {
                up.push(v);
            } else if a > i {
                down.push(v);
            }
        }
    }
    let pm = mean(&patch);
    let sd = (patch.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / patch.len() as f64).sqrt();
    let max = patch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = patch.iter().copied().fold(f64::INFINITY, f64::min);
    let grad = |a: &[f64], b: &[f64]| {
        if a.is_empty() || b.is_empty() {
            0.0
        } else {
            mean(b) - mean(a)
        }
    };
    let (gx, gy) = (grad(&left, &right), grad(&up, &down));
    let med = median(&mut patch);
    let own = at(i, j);
    let mirror = at(i, width - 1 - j);
    let global = mean(z);
    FeatureVector {
        tree: vec![
            i as f64 / height as f64,
            j as f64 / width as f64,
            own,
            pm,
            med,
            max,
            min,
            sd,
            gx,
            gy,
            mirror,
            global,
        ],
        regression: vec![own, pm, mirror, global],
    }
}

fn light(s: &[f64], width: usize, height: usize, blocks: usize) -> FeatureVector {
    let mut tree = Vec::with_capacity(blocks * blocks + 3);
    for bi in 0..blocks {
        for bj in 0..blocks {
            let rows = bi * height / blocks..((bi + 1) * height / blocks).max(bi * height / blocks + 1);
            let cols = bj * width / blocks..((bj + 1) * width / blocks).max(bj * width / blocks + 1);
            let vals: Vec<f64> = rows
                .flat_map(|a| cols.clone().map(move |b| (a, b)))
                .filter(|&(a, b)| a < height && b < width)
                .map(|(a, b)| s[a * width + b])
                .collect();
            tree.push(mean(&vals));
        }
    }
    let half = |pick: &dyn Fn(usize, usize) -> bool| {
        let vals: Vec<f64> = (0..height)
            .flat_map(|a| (0..width).map(move |b| (a, b)))
            .filter(|&(a, b)| pick(a, b))
            .map(|(a, b)| s[a * width + b])
            .collect();
        mean(&vals)
    };
    let all = mean(s);
    let lr = half(&|_, b| 2 * b < width) - half(&|_, b| 2 * b >= width);
    let tb = half(&|a, _| 2 * a < height) - half(&|a, _| 2 * a >= height);
    tree.extend([all, lr, tb]);
    FeatureVector {
        tree,
        regression: vec![all, lr, tb],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kasa_recovers_exact_circle() {
        let pts: Vec<[f64; 2]> = (0..10)
            .map(|k| {
                let a = 0.3 + k as f64 * 0.5;
                [0.3 + 1.7 * a.sin(), -0.2 + 1.7 * a.cos()]
            })
            .collect();
        let (c, r) = kasa_fit(&pts);
        assert!((c[0] - 0.3).abs() < 1e-12 && (c[1] + 0.2).abs() < 1e-12);
        assert!((r - 1.7).abs() < 1e-12);
    }

    #[test]
    fn uniform_image_has_equal_colour_clusters() {
        let ctx = vec![Message::gaussian(0.4, 0.01); 16];
        let f = Featurizer::SquareColour {
            width: 4,
            height: 4,
        }
        .features(&ctx, 0);
        assert_eq!(f.regression[0], f.regression[1]);
    }

    #[test]
    fn exact_segmentation_counts_side() {
        let (w, l) = (16, 6);
        let ctx: Vec<Message> = (0..w * w)
            .map(|k| {
                let (i, j) = (k / w, k % w);
                Message::bernoulli(if (3..3 + l).contains(&i) && (5..5 + l).contains(&j) {
                    1.0
                } else {
                    0.0
                })
            })
            .collect();
        let f = Featurizer::SideLength { width: w, height: w }.features(&ctx, 0);
        assert_eq!(f.regression[0], l as f64);
        assert_eq!(f.regression[1], l as f64);
        assert_eq!(f.regression[2], l as f64);
        let c = Featurizer::SquareCentre { width: w, height: w }.features(&ctx, 0);
        assert_eq!(c.regression, vec![8.0, 6.0]);
    }

    #[test]
    fn constant_shading_gives_constant_blocks() {
        let ctx = vec![Message::gaussian(0.7, 0.1); 256];
        let f = Featurizer::Light {
            width: 16,
            height: 16,
            blocks: 4,
        }
        .features(&ctx, 0);
        assert!(f.tree[..16].iter().all(|v| (v - 0.7).abs() < 1e-15));
        assert_eq!(&f.regression[1..], &[0.0, 0.0]);
    }

    #[test]
    fn centroid_is_translation_equivariant() {
        let base: Vec<Message> = (0..10)
            .map(|k| Message::point_mass(vec![(k as f64).sin(), (k as f64 * 1.3).cos()]))
            .collect();
        let moved: Vec<Message> = base
            .iter()
            .map(|m| {
                let v = m.mean().unwrap();
                Message::point_mass(vec![v[0] + 2.5, v[1] - 1.0])
            })
            .collect();
        let a = Featurizer::CircleCentre.features(&base, 0);
        let b = Featurizer::CircleCentre.features(&moved, 0);
        assert!((b.tree[0] - a.tree[0] - 2.5).abs() < 1e-12);
        assert!((b.tree[1] - a.tree[1] + 1.0).abs() < 1e-12);
    }
}
