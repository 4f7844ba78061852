use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solarcast::features::FeatureMatrix;
use solarcast::forest::{fit_forest, fit_tree, Forest, ForestParams, TreeNode, TreeParams};

const P: usize = 5;

/// Smooth nonlinear target in two of five features, plus noise.
fn benchmark(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..P).map(|_| rng.gen::<f64>()).collect()).collect();
    let y = rows.iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[1] + 0.3 * (rng.gen::<f64>() - 0.5)).collect();
    let names = (0..P).map(|j| format!("x{j}")).collect();
    (FeatureMatrix::from_rows(names, &rows), y)
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

fn forest_test_mse(forest: &Forest, test: &FeatureMatrix, y: &[f64]) -> f64 {
    mse(&forest.predict_values(&test.values, P), y)
}

#[test]
fn forest_beats_its_best_tree() {
    let (test, y_test) = benchmark(400, 999);
    let mut wins = 0;
    for seed in 0..10 {
        let (train, y) = benchmark(400, seed);
        let forest =
            fit_forest(&train, &y, &ForestParams { n_trees: 30, min_leaf: 3, seed, ..Default::default() }).unwrap();
        let best_tree = forest
            .trees
            .iter()
            .map(|t| mse(&test.rows().map(|r| t.predict(r)).collect::<Vec<_>>(), &y_test))
            .fold(f64::INFINITY, f64::min);
        if forest_test_mse(&forest, &test, &y_test) <= best_tree {
            wins += 1;
        }
    }
    assert!(wins >= 8, "forest beat its best tree on {wins}/10 seeds");
}

#[test]
fn test_mse_spread_shrinks_with_more_trees() {
    let (train, y) = benchmark(300, 42);
    let (test, y_test) = benchmark(300, 43);
    let variance = |b: usize| {
        let m: Vec<f64> = (0..10)
            .map(|seed| {
                let f = fit_forest(&train, &y, &ForestParams { n_trees: b, min_leaf: 3, seed, ..Default::default() })
                    .unwrap();
                forest_test_mse(&f, &test, &y_test)
            })
            .collect();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m.len() - 1) as f64
    };
    let (v1, v10, v100) = (variance(1), variance(10), variance(100));
    assert!(v1 > v10 && v10 > v100, "variances {v1:e} {v10:e} {v100:e}");
}

#[test]
fn importances_sum_to_one() {
    let (train, y) = benchmark(200, 7);
    let f = fit_forest(&train, &y, &ForestParams { n_trees: 10, ..Default::default() }).unwrap();
    assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(f.importances.iter().all(|&v| v >= 0.0));
    assert!(f.importances[0] + f.importances[1] > 0.5, "{:?}", f.importances);
}

#[test]
fn tree_order_and_single_tree_aggregation() {
    let (train, y) = benchmark(150, 3);
    let mut f = fit_forest(&train, &y, &ForestParams { n_trees: 7, seed: 3, ..Default::default() }).unwrap();
    let before = f.predict_values(&train.values, P);
    f.trees.reverse();
    let after = f.predict_values(&train.values, P);
    for (a, b) in before.iter().zip(&after) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    let single = fit_forest(&train, &y, &ForestParams { n_trees: 1, seed: 5, ..Default::default() }).unwrap();
    for r in train.rows() {
        assert_eq!(single.predict_row(r), single.trees[0].predict(r));
    }
}

/// Groups training rows by the leaf they reach; returns (leaf, targets).
fn routed<'a>(tree: &'a TreeNode, x: &FeatureMatrix, y: &[f64]) -> Vec<(&'a TreeNode, Vec<f64>)> {
    let mut groups: Vec<(&TreeNode, Vec<f64>)> = Vec::new();
    for (r, &t) in x.rows().zip(y) {
        let leaf = tree.leaf_for(r);
        match groups.iter_mut().find(|(l, _)| std::ptr::eq(*l, leaf)) {
            Some((_, v)) => v.push(t),
            None => groups.push((leaf, vec![t])),
        }
    }
    groups
}

#[test]
fn leaves_predict_the_mean_of_routed_targets() {
    let (train, y) = benchmark(250, 11);
    let params = TreeParams { mtry: Some(2), min_leaf: 4, max_depth: None };
    let tree = fit_tree(&train.values, P, &y, &params, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let groups = routed(&tree, &train, &y);
    assert_eq!(groups.len(), tree.leaf_count());
    for (leaf, targets) in groups {
        let TreeNode::Leaf { prediction, count } = leaf else { unreachable!() };
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        assert_eq!(*count, targets.len());
        assert!((prediction - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_invariants(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..60),
        min_leaf in 1usize..6,
        seed in any::<u64>(),
    ) {
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] - r[2]).collect();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let params = TreeParams { mtry: Some(2), min_leaf, max_depth: None };
        let tree = fit_tree(&flat, 3, &y, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));

        fn walk(n: &TreeNode, min_leaf: usize, total: usize, out: &mut usize) {
            match n {
                TreeNode::Leaf { count, .. } => {
                    assert!(*count >= min_leaf || *count == total);
                    *out += count;
                }
                TreeNode::Internal { left, right, .. } => {
                    walk(left, min_leaf, total, out);
                    walk(right, min_leaf, total, out);
                }
            }
        }
        let mut seen = 0;
        walk(&tree, min_leaf, y.len(), &mut seen);
        prop_assert_eq!(seen, y.len());
        for r in rows.iter() {
            let p = tree.predict(r);
            prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
        }
    }
}
