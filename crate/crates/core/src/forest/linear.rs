use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ForestError;
use crate::features::FeatureMatrix;

/// Smallest Cholesky pivot, relative to the largest diagonal entry, accepted
/// before a system counts as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub ridge_lambda: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict_values(&self, values: &[f64], n_features: usize) -> Vec<f64> {
        values.chunks_exact(n_features.max(1)).map(|r| self.predict_row(r)).collect()
    }
}

/// Minimises `|y - Xb - c|² + λ|b|²` with the intercept unpenalised.
pub fn fit_linear(x: &FeatureMatrix, y: &[f64], ridge_lambda: f64) -> Result<LinearModel, ForestError> {
    let all: Vec<usize> = (0..x.n_cols()).collect();
    fit_linear_on(x, y, ridge_lambda, &all)
}

/// Like [`fit_linear`] but only `active` columns enter the system; the rest
/// get a zero coefficient.
pub fn fit_linear_on(
    x: &FeatureMatrix,
    y: &[f64],
    ridge_lambda: f64,
    active: &[usize],
) -> Result<LinearModel, ForestError> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if n == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    if y.len() != n {
        return Err(ForestError::LengthMismatch { rows: n, targets: y.len() });
    }
    if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
        return Err(ForestError::InvalidHyperparams(format!("ridge lambda {ridge_lambda} must be finite and >= 0")));
    }
    let k = active.len();
    if ridge_lambda == 0.0 && n < k + 1 {
        return Err(ForestError::SingularSystem(format!("{n} rows for {k} columns without ridge penalty")));
    }

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut x_mean = vec![0.0; k];
    for row in x.rows() {
        for (m, &j) in x_mean.iter_mut().zip(active) {
            *m += row[j];
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let mut centred = vec![0.0; k];
    for (row, &yi) in x.rows().zip(y) {
        for (c, (&j, m)) in centred.iter_mut().zip(active.iter().zip(&x_mean)) {
            *c = row[j] - m;
        }
        let yc = yi - y_mean;
        for a in 0..k {
            rhs[a] += centred[a] * yc;
            for b in 0..=a {
                gram[(a, b)] += centred[a] * centred[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
        gram[(a, a)] += ridge_lambda;
    }

    let beta = if k == 0 {
        DVector::zeros(0)
    } else {
        let scale = gram.diagonal().max();
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| ForestError::SingularSystem("normal equations are not positive definite".into()))?;
        let min_pivot = chol.l_dirty().diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
        if scale.is_nan() || scale <= 0.0 || min_pivot < PIVOT_TOLERANCE * scale {
            return Err(ForestError::SingularSystem("design matrix is rank deficient".into()));
        }
        chol.solve(&rhs)
    };

    let mut coefficients = vec![0.0; p];
    for (&j, b) in active.iter().zip(beta.iter()) {
        coefficients[j] = *b;
    }
    let intercept = y_mean - x_mean.iter().zip(beta.iter()).map(|(m, b)| m * b).sum::<f64>();
    if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
        return Err(ForestError::SingularSystem("solution is not finite".into()));
    }
    Ok(LinearModel { coefficients, intercept, ridge_lambda })
}

/// Columns an unpenalised fit can identify: constant columns are dropped and
/// so is the first remaining column of each one-hot block, which would
/// otherwise be collinear with the intercept.
pub fn identifiable_columns(x: &FeatureMatrix) -> Vec<usize> {
    let p = x.n_cols();
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for row in x.rows() {
        for j in 0..p {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let mut reference_taken = [false; 2];
    let mut keep = Vec::with_capacity(p);
    for (j, name) in x.columns.iter().enumerate() {
        if lo[j] >= hi[j] {
            continue;
        }
        let block = if name.starts_with("hour_") {
            Some(0)
        } else if name.starts_with("season_") {
            Some(1)
        } else {
            None
        };
        if let Some(b) = block {
            if !reference_taken[b] {
                reference_taken[b] = true;
                continue;
            }
        }
        keep.push(j);
    }
    keep
}
