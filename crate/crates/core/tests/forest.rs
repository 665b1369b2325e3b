mod common;

use consensus_core::forest::{FeatureVector, Forest, ForestConfig, Row, Split};
use consensus_core::{Family, Message};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn noise_free_linear_data_is_recovered_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w0 = DMatrix::from_row_slice(2, 4, &[0.7, -1.3, 0.4, 2.0, -0.5, 0.9, 1.1, -0.25]);
    let rows = common::linear_rows(1000, &w0, &mut rng);
    // oracle: least squares on the full dataset through the normal equations
    let all: Vec<usize> = (0..rows.len()).collect();
    let (x, y) = common::design(&rows, &all);
    let w_ls = (x.transpose() * &x).lu().solve(&(x.transpose() * &y)).unwrap().transpose();
    let cfg = ForestConfig {
        trees: 1,
        max_depth: 0,
        ..ForestConfig::default()
    };
    let (forest, _, records) = Forest::train_with_records(&rows, Family::MvGaussian(2), None, &cfg).unwrap();
    let leaf = &forest.trees[0].leaves[0];
    for r in 0..2 {
        for c in 0..4 {
            assert!((leaf.w[r][c] - w_ls[(r, c)]).abs() < 1e-8, "W[{r}][{c}] {} vs {}", leaf.w[r][c], w_ls[(r, c)]);
        }
    }
    // in-bag rows lie inside the leaf's target range, so no clamping applies
    for r in records[0][0].examples.iter().map(|&i| &rows[i]) {
        let mut xr = r.features.regression.clone();
        xr.push(1.0);
        let expect = &w_ls * DVector::from_vec(xr);
        let pred = forest.predict(&r.features).unwrap();
        let mean = pred.mean().unwrap();
        for k in 0..2 {
            assert!((mean[k] - expect[k]).abs() < 1e-8);
        }
        assert!(pred.variances().unwrap().iter().all(|&v| v < 1e-6));
    }
}

#[test]
fn deep_forest_on_linear_data_predicts_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w0 = DMatrix::from_row_slice(1, 3, &[1.5, -0.75, 0.3]);
    let rows = common::linear_rows(400, &w0, &mut rng);
    let cfg = ForestConfig {
        trees: 3,
        ..ForestConfig::default()
    };
    let (forest, _, records) = Forest::train_with_records(&rows, Family::Gaussian, None, &cfg).unwrap();
    let in_bag = |t: usize, i: usize| records[t][0].examples.contains(&i);
    let everywhere: Vec<usize> = (0..rows.len()).filter(|&i| (0..3).all(|t| in_bag(t, i))).collect();
    assert!(everywhere.len() > 20);
    for r in everywhere.iter().map(|&i| &rows[i]) {
        let got = forest.predict(&r.features).unwrap().mean().unwrap()[0];
        assert!((got - r.target[0]).abs() < 1e-8, "{got} vs {}", r.target[0]);
    }
}

#[test]
fn every_chosen_split_maximises_the_objective() {
    let rows = common::two_regimes(240, 0.05, 3);
    let cfg = ForestConfig {
        trees: 4,
        max_depth: 4,
        min_leaf: 8,
        candidates: 12,
        seed: 5,
        ..ForestConfig::default()
    };
    let (_, _, records) = Forest::train_with_records(&rows, Family::Gaussian, None, &cfg).unwrap();
    let (checked, violation) = common::split_violations(&rows, &records, cfg.min_leaf);
    assert_eq!(violation, None);
    assert!(checked > 0);
}

#[test]
fn root_splits_on_the_regime_feature() {
    let rows = common::two_regimes(200, 0.0, 4);
    let cfg = ForestConfig {
        trees: 1,
        max_depth: 1,
        min_leaf: 5,
        candidates: 64,
        ..ForestConfig::default()
    };
    let (forest, _, records) = Forest::train_with_records(&rows, Family::Gaussian, None, &cfg).unwrap();
    let root = &records[0][0];
    let chosen = root.chosen.expect("root splits");
    match &root.candidates[chosen] {
        Split::Threshold { feature, threshold } => {
            assert_eq!(*feature, 0);
            assert!(threshold.abs() < 0.2, "threshold {threshold}");
        }
        other => panic!("unexpected split {other:?}"),
    }
    assert_eq!(forest.trees[0].depth(), 1);
}

#[test]
fn constant_targets_predict_the_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows: Vec<Row> = (0..60)
        .map(|_| common::row(vec![rng.random_range(0.0..1.0)], vec![rng.random_range(0.0..1.0)], vec![0.42]))
        .collect();
    let (forest, report) = Forest::train(&rows, Family::Gaussian, None, &ForestConfig::default()).unwrap();
    assert_eq!(report.single_leaf_trees, forest.trees.len());
    let got = forest.predict(&rows[0].features).unwrap();
    assert!((got.mean().unwrap()[0] - 0.42).abs() < 1e-12);
}

#[test]
fn json_round_trip_gives_identical_predictions() {
    let rows = common::two_regimes(150, 0.1, 7);
    let (forest, _) = Forest::train(&rows, Family::Gaussian, None, &ForestConfig::default()).unwrap();
    let back = Forest::from_json(&forest.to_json()).unwrap();
    assert_eq!(back, forest);
    for r in &rows[..20] {
        assert_eq!(back.predict(&r.features).unwrap(), forest.predict(&r.features).unwrap());
    }
}

#[test]
fn too_few_rows_are_rejected() {
    let rows = common::two_regimes(5, 0.1, 8);
    assert!(Forest::train(&rows, Family::Gaussian, None, &ForestConfig::default()).is_err());
}

#[test]
fn predictions_stay_inside_the_training_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w0 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let rows = common::linear_rows(100, &w0, &mut rng);
    let (forest, _) = Forest::train(&rows, Family::Gaussian, None, &ForestConfig::default()).unwrap();
    let far = FeatureVector {
        tree: vec![50.0],
        regression: vec![50.0],
    };
    let hi = rows.iter().map(|r| r.target[0]).fold(f64::MIN, f64::max);
    let Message::Gaussian(g) = forest.predict(&far).unwrap() else { panic!() };
    assert!(g.mean() <= hi + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leaf_residual_covariances_are_psd(seed in 0u64..1000, noise in 0.0..0.5f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Row> = (0..80)
            .map(|_| {
                let t = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let y = vec![t[0] + noise * rng.random_range(-1.0..1.0), t[1] * t[0] + noise * rng.random_range(-1.0..1.0)];
                common::row(t.clone(), t, y)
            })
            .collect();
        let cfg = ForestConfig { trees: 2, seed, ..ForestConfig::default() };
        let (forest, _) = Forest::train(&rows, Family::MvGaussian(2), None, &cfg).unwrap();
        for leaf in forest.trees.iter().flat_map(|t| &t.leaves) {
            let c = DMatrix::from_fn(2, 2, |i, j| leaf.residual_covariance[i][j]);
            let eig = c.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&e| e >= -1e-12), "eigenvalues {eig:?}");
        }
    }
}
