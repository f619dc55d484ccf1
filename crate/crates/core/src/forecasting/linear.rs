//! Closed-form least squares via the normal equations.

use super::ForecastError;
use nalgebra::{DMatrix, DVector};

const RIDGE_JITTER: f64 = 1e-8;

/// Least-squares fit of `y ~ x * w + b`, solved from the normal equations with
/// a small ridge jitter on the diagonal. Columns and target are centered
/// before the Gram matrix is formed — normal equations square the condition
/// number, and centering keeps the formation error at the covariance scale —
/// then the intercept is recovered from the means. Requires at least one more
/// row than columns.
pub fn fit_linear(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64), ForecastError> {
    let (rows, cols) = x.shape();
    if y.len() != rows {
        return Err(ForecastError::ShapeMismatch {
            what: "target length",
            expected: rows,
            actual: y.len(),
        });
    }
    if rows < cols + 1 {
        return Err(ForecastError::InsufficientData { needed: cols + 1, available: rows });
    }

    let col_means = DVector::from_fn(cols, |j, _| x.column(j).sum() / rows as f64);
    let y_mean = y.sum() / rows as f64;
    let centered = DMatrix::from_fn(rows, cols, |i, j| x[(i, j)] - col_means[j]);
    let centered_y = y.map(|v| v - y_mean);

    let mut gram = centered.transpose() * &centered;
    for i in 0..cols {
        gram[(i, i)] += RIDGE_JITTER;
    }
    let rhs = centered.transpose() * centered_y;
    let weights = gram.cholesky().ok_or(ForecastError::SingularSystem)?.solve(&rhs);
    let intercept = y_mean - col_means.dot(&weights);
    Ok((weights, intercept))
}
