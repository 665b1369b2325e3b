//! Regression forests mapping featurized context messages to the
//! parameters of a consensus message.
//!
//! Trees route on tree features and fit a ridge regression from regression
//! features (plus a bias) to the target mean at each leaf. Splits maximize
//! `I = -E_left - E_right`, where `E` is the summed squared residual of the
//! child's ridge fit.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expfam::{Family, Message, Moments};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("need at least {needed} examples, got {got}")]
    TooFewExamples { needed: usize, got: usize },
    #[error("feature dimensions differ: expected {expected:?}, got {got:?}")]
    Dimensions {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("target dimension {got} does not match output family {family}")]
    TargetDimension { family: Family, got: usize },
    #[error("no tree produced a finite prediction")]
    NoPrediction,
    #[error("invalid forest config: {0}")]
    Config(String),
    #[error("forest json: {0}")]
    Json(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    /// Features used to route through split nodes.
    pub tree: Vec<f64>,
    /// Inputs of the leaf regressions.
    pub regression: Vec<f64>,
}

/// One training pair: features of a context and the oracle message moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub features: FeatureVector,
    pub target: Vec<f64>,
    /// Row-major covariance of the oracle message; zero for point masses.
    pub covariance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub candidates: usize,
    pub ridge: f64,
    /// Leaf coefficients below this magnitude are zeroed.
    pub prune: f64,
    /// Share of candidates that are pixel-pair tests, when the layout has a pixel block.
    pub pair_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 8,
            max_depth: 12,
            min_leaf: 10,
            candidates: 64,
            ridge: 1e-6,
            prune: 1e-4,
            pair_fraction: 0.5,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.trees == 0 || self.candidates == 0 || self.min_leaf == 0 {
            return Err(ForestError::Config(
                "trees, candidates and minLeaf must be positive".into(),
            ));
        }
        if !(self.ridge >= 0.0) || !(self.prune >= 0.0) {
            return Err(ForestError::Config("ridge and prune must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.pair_fraction) {
            return Err(ForestError::Config("pairFraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Split {
    /// Left when `tree[feature] <= threshold`.
    Threshold { feature: usize, threshold: f64 },
    /// Left when `|tree[i] - tree[j]| <= tolerance`.
    PixelPair { i: usize, j: usize, tolerance: f64 },
}

impl Split {
    pub fn goes_left(&self, t: &[f64]) -> bool {
        match *self {
            Split::Threshold { feature, threshold } => t[feature] <= threshold,
            Split::PixelPair { i, j, tolerance } => (t[i] - t[j]).abs() <= tolerance,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitNode {
    pub split: Split,
    pub left: Child,
    pub right: Child,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Leaf {
    /// Rows map `[regression features, 1]` to the target mean.
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub residual_covariance: Vec<Vec<f64>>,
    pub count: usize,
    /// Per-coordinate range of the training targets; predictions are
    /// clamped to it so a leaf never extrapolates past what it saw.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root; a tree without nodes is a single leaf.
    pub nodes: Vec<SplitNode>,
    pub leaves: Vec<Leaf>,
}

impl Tree {
    fn leaf_for(&self, t: &[f64]) -> &Leaf {
        if self.nodes.is_empty() {
            return &self.leaves[0];
        }
        let mut at = 0;
        loop {
            let node = &self.nodes[at];
            let next = if node.split.goes_left(t) {
                node.left
            } else {
                node.right
            };
            match next {
                Child::Node(i) => at = i,
                Child::Leaf(i) => return &self.leaves[i],
            }
        }
    }

    /// Longest root-to-leaf path, in splits.
    pub fn depth(&self) -> usize {
        fn walk(tree: &Tree, c: Child) -> usize {
            match c {
                Child::Leaf(_) => 0,
                Child::Node(i) => {
                    1 + walk(tree, tree.nodes[i].left).max(walk(tree, tree.nodes[i].right))
                }
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(self, Child::Node(0))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureDims {
    pub tree: usize,
    pub regression: usize,
    pub output: usize,
    /// Range `[start, start + len)` of tree features eligible for pixel-pair tests.
    pub pair_block: Option<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Forest {
    pub output_family: Family,
    pub trees: Vec<Tree>,
    pub feature_dims: FeatureDims,
    pub max_depth: usize,
}

/// Split search at one node, kept for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    /// Row indices reaching the node, with bootstrap repeats.
    pub examples: Vec<usize>,
    pub candidates: Vec<Split>,
    /// Index of the winning candidate; `None` when the node became a leaf.
    pub chosen: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Trees that never split although they had enough examples.
    pub single_leaf_trees: usize,
}

/// Flattened design matrix with bias column.
struct Design<'a> {
    p: usize,
    q: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    rows: &'a [Row],
}

impl<'a> Design<'a> {
    fn new(rows: &'a [Row]) -> Self {
        let p = rows[0].features.regression.len() + 1;
        let q = rows[0].target.len();
        let mut x = Vec::with_capacity(rows.len() * p);
        let mut y = Vec::with_capacity(rows.len() * q);
        for r in rows {
            x.extend_from_slice(&r.features.regression);
            x.push(1.0);
            y.extend_from_slice(&r.target);
        }
        Design { p, q, x, y, rows }
    }

    fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn y(&self, i: usize) -> &[f64] {
        &self.y[i * self.q..(i + 1) * self.q]
    }
}

/// Sufficient statistics of a ridge regression. The bias is not penalized.
#[derive(Clone)]
struct Stats {
    n: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
}

impl Stats {
    fn zero(p: usize, q: usize) -> Self {
        Stats {
            n: 0,
            xtx: vec![0.0; p * p],
            xty: vec![0.0; p * q],
            yty: 0.0,
        }
    }

    fn add(&mut self, d: &Design, i: usize) {
        let (x, y) = (d.x(i), d.y(i));
        self.n += 1;
        for a in 0..d.p {
            for b in 0..d.p {
                self.xtx[a * d.p + b] += x[a] * x[b];
            }
            for c in 0..d.q {
                self.xty[a * d.q + c] += x[a] * y[c];
            }
        }
        self.yty += y.iter().map(|v| v * v).sum::<f64>();
    }

    fn minus(&self, other: &Stats) -> Stats {
        Stats {
            n: self.n - other.n,
            xtx: self.xtx.iter().zip(&other.xtx).map(|(a, b)| a - b).collect(),
            xty: self.xty.iter().zip(&other.xty).map(|(a, b)| a - b).collect(),
            yty: self.yty - other.yty,
        }
    }

    /// Ridge coefficients (p × q) and the summed squared residual.
    fn fit(&self, p: usize, q: usize, ridge: f64) -> Option<(DMatrix<f64>, f64)> {
        let xtx = DMatrix::from_row_slice(p, p, &self.xtx);
        let xty = DMatrix::from_row_slice(p, q, &self.xty);
        let mut a = xtx.clone();
        for i in 0..p - 1 {
            a[(i, i)] += ridge;
        }
        let w = a.cholesky()?.solve(&xty);
        let fitted = (w.transpose() * &xtx * &w).trace();
        let cross = (w.transpose() * &xty).trace();
        let e = (self.yty - 2.0 * cross + fitted).max(0.0);
        e.is_finite().then_some((w, e))
    }
}

/// Scores of candidates at a node; `None` marks an inadmissible candidate.
fn score_candidates(
    d: &Design,
    examples: &[usize],
    candidates: &[Split],
    parent: &Stats,
    cfg: &ForestConfig,
) -> Vec<Option<f64>> {
    candidates
        .iter()
        .map(|split| {
            let mut left = Stats::zero(d.p, d.q);
            for &i in examples {
                if split.goes_left(&d.rows[i].features.tree) {
                    left.add(d, i);
                }
            }
            if left.n < cfg.min_leaf || examples.len() - left.n < cfg.min_leaf {
                return None;
            }
            let right = parent.minus(&left);
            let (_, el) = left.fit(d.p, d.q, cfg.ridge)?;
            let (_, er) = right.fit(d.p, d.q, cfg.ridge)?;
            Some(-el - er)
        })
        .collect()
}

/// Index of the best admissible candidate; ties go to the lowest index.
pub fn best_split(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn sample_candidates(
    d: &Design,
    examples: &[usize],
    dims: &FeatureDims,
    cfg: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Split> {
    (0..cfg.candidates)
        .map(|_| {
            let row = &d.rows[examples[rng.random_range(0..examples.len())]].features.tree;
            match dims.pair_block {
                Some([start, len]) if len >= 2 && rng.random::<f64>() < cfg.pair_fraction => {
                    let i = start + rng.random_range(0..len);
                    let mut j = start + rng.random_range(0..len - 1);
                    if j >= i {
                        j += 1;
                    }
                    Split::PixelPair {
                        i,
                        j,
                        tolerance: (row[i] - row[j]).abs(),
                    }
                }
                _ => {
                    let feature = rng.random_range(0..dims.tree);
                    Split::Threshold {
                        feature,
                        threshold: row[feature],
                    }
                }
            }
        })
        .collect()
}

fn make_leaf(d: &Design, examples: &[usize], cfg: &ForestConfig) -> Leaf {
    let (p, q) = (d.p, d.q);
    let mut stats = Stats::zero(p, q);
    for &i in examples {
        stats.add(d, i);
    }
    let mut w = stats
        .fit(p, q, cfg.ridge)
        .map(|(w, _)| w.transpose())
        .unwrap_or_else(|| DMatrix::zeros(q, p));
    w.apply(|v| {
        if v.abs() < cfg.prune {
            *v = 0.0;
        }
    });
    let n = examples.len() as f64;
    let mut cov = DMatrix::<f64>::zeros(q, q);
    for &i in examples {
        let x = DVector::from_column_slice(d.x(i));
        let e = DVector::from_column_slice(d.y(i)) - &w * x;
        cov += &e * e.transpose() / n;
        cov += DMatrix::from_row_slice(q, q, &d.rows[i].covariance) / n;
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    let mut lower = vec![f64::INFINITY; q];
    let mut upper = vec![f64::NEG_INFINITY; q];
    for &i in examples {
        for (c, &y) in d.y(i).iter().enumerate() {
            lower[c] = lower[c].min(y);
            upper[c] = upper[c].max(y);
        }
    }
    Leaf {
        w: (0..q).map(|r| w.row(r).iter().copied().collect()).collect(),
        residual_covariance: (0..q).map(|r| cov.row(r).iter().copied().collect()).collect(),
        count: examples.len(),
        lower,
        upper,
    }
}

fn grow_tree(
    d: &Design,
    dims: &FeatureDims,
    cfg: &ForestConfig,
    tree_index: usize,
) -> (Tree, Vec<NodeRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(tree_index as u64);
    let n = d.rows.len();
    let bootstrap: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();

    let mut tree = Tree {
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    let mut records = Vec::new();
    // (examples, depth, slot to patch in the parent)
    let mut stack: Vec<(Vec<usize>, usize, Option<(usize, bool)>)> = vec![(bootstrap, 0, None)];
    while let Some((examples, depth, parent)) = stack.pop() {
        let mut stats = Stats::zero(d.p, d.q);
        for &i in &examples {
            stats.add(d, i);
        }
        let splittable = depth < cfg.max_depth
            && examples.len() >= 2 * cfg.min_leaf
            && stats
                .fit(d.p, d.q, cfg.ridge)
                .is_some_and(|(_, e)| e > 1e-12 * (1.0 + stats.yty));
        let mut record = NodeRecord {
            examples: examples.clone(),
            candidates: Vec::new(),
            chosen: None,
        };
        if splittable {
            record.candidates = sample_candidates(d, &examples, dims, cfg, &mut rng);
            let scores = score_candidates(d, &examples, &record.candidates, &stats, cfg);
            record.chosen = best_split(&scores);
        }
        let child = match record.chosen {
            Some(c) => {
                let split = record.candidates[c].clone();
                let (left, right): (Vec<usize>, Vec<usize>) = examples
                    .iter()
                    .partition(|&&i| split.goes_left(&d.rows[i].features.tree));
                let id = tree.nodes.len();
                tree.nodes.push(SplitNode {
                    split,
                    left: Child::Leaf(usize::MAX),
                    right: Child::Leaf(usize::MAX),
                });
                stack.push((right, depth + 1, Some((id, false))));
                stack.push((left, depth + 1, Some((id, true))));
                Child::Node(id)
            }
            None => {
                tree.leaves.push(make_leaf(d, &examples, cfg));
                Child::Leaf(tree.leaves.len() - 1)
            }
        };
        records.push(record);
        if let Some((id, is_left)) = parent {
            if is_left {
                tree.nodes[id].left = child;
            } else {
                tree.nodes[id].right = child;
            }
        }
    }
    (tree, records)
}

impl Forest {
    /// Trains a forest and returns the split records of every tree.
    pub fn train_with_records(
        rows: &[Row],
        family: Family,
        pair_block: Option<[usize; 2]>,
        cfg: &ForestConfig,
    ) -> Result<(Forest, TrainReport, Vec<Vec<NodeRecord>>), ForestError> {
        cfg.validate()?;
        let needed = 2 * cfg.min_leaf;
        if rows.len() < needed {
            return Err(ForestError::TooFewExamples {
                needed,
                got: rows.len(),
            });
        }
        let dims = FeatureDims {
            tree: rows[0].features.tree.len(),
            regression: rows[0].features.regression.len(),
            output: rows[0].target.len(),
            pair_block,
        };
        if dims.output != family.dim() || family == Family::Bernoulli {
            return Err(ForestError::TargetDimension {
                family,
                got: dims.output,
            });
        }
        for r in rows {
            let got = (r.features.tree.len(), r.features.regression.len());
            if got != (dims.tree, dims.regression)
                || r.target.len() != dims.output
                || r.covariance.len() != dims.output * dims.output
            {
                return Err(ForestError::Dimensions {
                    expected: (dims.tree, dims.regression),
                    got,
                });
            }
        }
        if let Some([start, len]) = pair_block {
            if start + len > dims.tree {
                return Err(ForestError::Config("pixel block outside tree features".into()));
            }
        }
        let design = Design::new(rows);
        let grown: Vec<(Tree, Vec<NodeRecord>)> = (0..cfg.trees)
            .into_par_iter()
            .map(|t| grow_tree(&design, &dims, cfg, t))
            .collect();
        let mut report = TrainReport::default();
        let mut trees = Vec::with_capacity(grown.len());
        let mut records = Vec::with_capacity(grown.len());
        for (tree, rec) in grown {
            if tree.nodes.is_empty() && rows.len() >= needed {
                report.single_leaf_trees += 1;
            }
            trees.push(tree);
            records.push(rec);
        }
        Ok((
            Forest {
                output_family: family,
                trees,
                feature_dims: dims,
                max_depth: cfg.max_depth,
            },
            report,
            records,
        ))
    }

    pub fn train(
        rows: &[Row],
        family: Family,
        pair_block: Option<[usize; 2]>,
        cfg: &ForestConfig,
    ) -> Result<(Forest, TrainReport), ForestError> {
        Self::train_with_records(rows, family, pair_block, cfg).map(|(f, r, _)| (f, r))
    }

    fn check_dims(&self, f: &FeatureVector) -> Result<(), ForestError> {
        let expected = (self.feature_dims.tree, self.feature_dims.regression);
        let got = (f.tree.len(), f.regression.len());
        if expected != got {
            return Err(ForestError::Dimensions { expected, got });
        }
        Ok(())
    }

    /// Mean and covariance predicted by each tree, skipping non-finite ones.
    pub fn tree_predictions(
        &self,
        f: &FeatureVector,
    ) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>, ForestError> {
        self.check_dims(f)?;
        let q = self.feature_dims.output;
        let mut x = f.regression.clone();
        x.push(1.0);
        let out: Vec<_> = self
            .trees
            .iter()
            .filter_map(|tree| {
                let leaf = tree.leaf_for(&f.tree);
                let mean: DVector<f64> = DVector::from_iterator(
                    q,
                    leaf.w.iter().enumerate().map(|(c, row)| {
                        let v: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
                        let (lo, hi) = (leaf.lower[c], leaf.upper[c]);
                        if lo <= hi { v.clamp(lo, hi) } else { v }
                    }),
                );
                let cov: DMatrix<f64> = DMatrix::from_fn(q, q, |r, c| leaf.residual_covariance[r][c]);
                (mean.iter().all(|v| v.is_finite()) && cov.iter().all(|v| v.is_finite()))
                    .then_some((mean, cov))
            })
            .collect();
        if out.is_empty() {
            return Err(ForestError::NoPrediction);
        }
        Ok(out)
    }

    /// Moment-averaged message over the trees.
    pub fn predict(&self, f: &FeatureVector) -> Result<Message, ForestError> {
        let messages: Vec<Message> = self
            .tree_predictions(f)?
            .into_iter()
            .filter_map(|(mean, cov)| {
                let moments = if self.output_family == Family::Gaussian {
                    Moments::Scalar {
                        mean: mean[0],
                        second: cov[(0, 0)] + mean[0] * mean[0],
                    }
                } else {
                    Moments::Vector {
                        second: cov + &mean * mean.transpose(),
                        mean,
                    }
                };
                Message::from_moments(self.output_family, &moments).ok()
            })
            .collect();
        if messages.is_empty() {
            return Err(ForestError::NoPrediction);
        }
        Message::moment_average(&messages).map_err(|_| ForestError::NoPrediction)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Forest, ForestError> {
        serde_json::from_str(text).map_err(|e| ForestError::Json(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf_tree(mean: f64, var: f64) -> Tree {
        Tree {
            nodes: Vec::new(),
            leaves: vec![Leaf {
                w: vec![vec![mean]],
                residual_covariance: vec![vec![var]],
                count: 10,
                lower: vec![mean],
                upper: vec![mean],
            }],
        }
    }

    fn forest(trees: Vec<Tree>) -> Forest {
        Forest {
            output_family: Family::Gaussian,
            trees,
            feature_dims: FeatureDims {
                tree: 0,
                regression: 0,
                output: 1,
                pair_block: None,
            },
            max_depth: 0,
        }
    }

    #[test]
    fn identical_trees_predict_their_leaf() {
        let f = forest(vec![leaf_tree(1.0, 2.0), leaf_tree(1.0, 2.0)]);
        let m = f.predict(&FeatureVector::default()).unwrap();
        assert!((m.scalar_mean().unwrap() - 1.0).abs() < 1e-12);
        assert!((m.variances().unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_trees_moment_average() {
        let f = forest(vec![leaf_tree(0.0, 1.0), leaf_tree(2.0, 1.0)]);
        let m = f.predict(&FeatureVector::default()).unwrap();
        assert!((m.scalar_mean().unwrap() - 1.0).abs() < 1e-12);
        assert!((m.variances().unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_predict_constant() {
        let rows: Vec<Row> = (0..40)
            .map(|i| Row {
                features: FeatureVector {
                    tree: vec![i as f64],
                    regression: vec![(i % 7) as f64],
                },
                target: vec![3.0],
                covariance: vec![0.5],
            })
            .collect();
        let (f, _) = Forest::train(&rows, Family::Gaussian, None, &ForestConfig::default()).unwrap();
        for r in &rows {
            let m = f.predict(&r.features).unwrap();
            assert!((m.scalar_mean().unwrap() - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(best_split(&[None, Some(-1.0), Some(-1.0)]), Some(1));
        assert_eq!(best_split(&[None, None]), None);
    }

    #[test]
    fn unsplittable_features_give_single_leaves() {
        let rows: Vec<Row> = (0..40)
            .map(|i| Row {
                features: FeatureVector {
                    tree: vec![1.0],
                    regression: vec![],
                },
                target: vec![(i % 2) as f64],
                covariance: vec![0.0],
            })
            .collect();
        let (f, report) =
            Forest::train(&rows, Family::Gaussian, None, &ForestConfig::default()).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.is_empty()));
        assert_eq!(report.single_leaf_trees, 8);
    }
}
