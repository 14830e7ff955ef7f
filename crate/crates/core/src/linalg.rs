//! Thin dense helpers over `nalgebra` shared by the econometrics code.

use nalgebra::{DMatrix, DVector};

/// Stack equal-length series as the columns of a `T x n` matrix.
pub fn columns(series: &[&[f64]]) -> DMatrix<f64> {
    let t = series.first().map_or(0, |s| s.len());
    DMatrix::from_fn(t, series.len(), |i, j| series[j][i])
}

/// Prepend a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

pub fn col_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()))
}

/// Covariance with the divide-by-T convention.
pub fn cov_ml(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows() as f64;
    let mu = col_means(x);
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    centered.transpose() * &centered / t
}

/// Numerical rank from singular values with the usual `max(m,n) eps s_max`
/// tolerance.
pub fn rank(x: &DMatrix<f64>) -> usize {
    if x.is_empty() {
        return 0;
    }
    let sv = x.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let tol = x.nrows().max(x.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// `ln |A|` for a symmetric positive definite matrix, or `None` if the
/// Cholesky factorization fails.
pub fn log_det_spd(a: &DMatrix<f64>) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    let v: f64 = (0..a.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    v.is_finite().then_some(v)
}

pub fn inv_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Some(a.clone().cholesky()?.inverse())
}

/// `v' A^{-1} v` for symmetric positive definite `A`.
pub fn quad_form_inv(a: &DMatrix<f64>, v: &DVector<f64>) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    let z = chol.solve(v);
    Some(v.dot(&z))
}
