use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_weighted, Presorted, TreeNode, TreeParams};
use super::ForestError;
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` means `max(1, p / 3)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, mtry: None, min_leaf: 5, max_depth: None, bootstrap: true, seed: 0 }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry.unwrap_or((n_features / 3).max(1))
    }

    pub fn tree_params(&self, n_features: usize) -> TreeParams {
        TreeParams { mtry: Some(self.resolved_mtry(n_features)), min_leaf: self.min_leaf, max_depth: self.max_depth }
    }

    pub fn validate(&self, n_features: usize) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidHyperparams("n_trees must be at least 1".into()));
        }
        self.tree_params(n_features).validate(n_features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    /// Hyperparameters with `mtry` resolved.
    pub hyperparams: ForestParams,
    /// Normalised impurity decrease per feature; all zero if no tree split.
    pub importances: Vec<f64>,
    pub trees: Vec<TreeNode>,
}

/// Generator for tree `index`: one ChaCha stream per tree under the forest
/// seed, so results do not depend on scheduling.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn fit_forest(x: &FeatureMatrix, y: &[f64], params: &ForestParams) -> Result<Forest, ForestError> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if n == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    if y.len() != n {
        return Err(ForestError::LengthMismatch { rows: n, targets: y.len() });
    }
    params.validate(p)?;
    let tree_params = params.tree_params(p);
    let data = Presorted::new(&x.values, p);

    let fitted: Vec<(TreeNode, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = tree_rng(params.seed, b);
            let mut counts = vec![0u32; n];
            if params.bootstrap {
                for _ in 0..n {
                    counts[rng.gen_range(0..n)] += 1;
                }
            } else {
                counts.fill(1);
            }
            fit_tree_weighted(&data, y, &counts, &tree_params, &mut rng)
        })
        .collect::<Result<_, _>>()?;

    let mut importances = vec![0.0; p];
    let mut trees = Vec::with_capacity(fitted.len());
    for (tree, imp) in fitted {
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            for (acc, v) in importances.iter_mut().zip(&imp) {
                *acc += v / total;
            }
        }
        trees.push(tree);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    let mut hyperparams = *params;
    hyperparams.mtry = Some(tree_params.mtry.unwrap_or(p));
    Ok(Forest { hyperparams, importances, trees })
}

impl Forest {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Predicts every row; the caller checks the column schema.
    pub fn predict_values(&self, values: &[f64], n_features: usize) -> Vec<f64> {
        values.par_chunks(n_features.max(1)).map(|row| self.predict_row(row)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        let p = rows[0].len();
        FeatureMatrix::from_rows((0..p).map(|j| format!("x{j}")).collect(), rows)
    }

    fn noisy_line(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let y = rows.iter().map(|r| 3.0 * r[0] + 0.05 * (rng.gen::<f64>() - 0.5)).collect();
        (matrix(&rows), y)
    }

    #[test]
    fn single_unbootstrapped_tree_memorises() {
        let (x, y) = noisy_line(200, 3);
        let params = ForestParams { n_trees: 1, mtry: Some(2), min_leaf: 1, bootstrap: false, ..Default::default() };
        let f = fit_forest(&x, &y, &params).unwrap();
        let pred = f.predict_values(&x.values, 2);
        let mse: f64 = pred.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
        assert_eq!(mse, 0.0);
    }

    #[test]
    fn prediction_is_the_tree_mean() {
        let (x, y) = noisy_line(150, 4);
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 7, ..Default::default() }).unwrap();
        for row in x.rows().take(20) {
            let mean = f.trees.iter().map(|t| t.predict(row)).sum::<f64>() / 7.0;
            assert_eq!(f.predict_row(row), mean);
        }
    }

    #[test]
    fn informative_feature_dominates_importance() {
        let (x, y) = noisy_line(500, 5);
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 30, mtry: Some(2), ..Default::default() }).unwrap();
        assert!(f.importances[0] > 0.9 && f.importances[1] < 0.1, "{:?}", f.importances);
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_forest_any_thread_count() {
        let (x, y) = noisy_line(300, 6);
        let params = ForestParams { n_trees: 8, seed: 11, ..Default::default() };
        let a = fit_forest(&x, &y, &params).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| fit_forest(&x, &y, &params).unwrap());
        assert_eq!(a, b);
        let c = fit_forest(&x, &y, &ForestParams { seed: 12, ..params }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn constant_targets_give_zero_importance() {
        let (x, _) = noisy_line(50, 7);
        let f = fit_forest(&x, &[2.0; 50], &ForestParams { n_trees: 3, ..Default::default() }).unwrap();
        assert_eq!(f.importances, vec![0.0, 0.0]);
        assert_eq!(f.predict_row(&[0.3, 0.3]), 2.0);
    }

    #[test]
    fn bad_hyperparams() {
        let (x, y) = noisy_line(10, 8);
        assert!(fit_forest(&x, &y, &ForestParams { n_trees: 0, ..Default::default() }).is_err());
        assert!(fit_forest(&x, &y, &ForestParams { mtry: Some(3), ..Default::default() }).is_err());
        assert!(fit_forest(&x, &y[..5], &ForestParams::default()).is_err());
        assert_eq!(ForestParams::default().resolved_mtry(67), 22);
        assert_eq!(ForestParams::default().resolved_mtry(2), 1);
    }
}
