use nalgebra::DMatrix;
use serde::Serialize;

use super::{f_cdf, AptError};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Mean R^2 of the N time-series regressions.
    pub avg_r2: f64,
    pub alphas: Vec<f64>,
    pub n: usize,
    pub t: usize,
    pub k: usize,
}

/// Gibbons-Ross-Shanken test that the intercepts of N portfolio regressions
/// on K traded factors are jointly zero.
///
/// `GRS = ((T-N-K)/N) a' S^{-1} a / (1 + m' O^{-1} m)` with S the
/// divide-by-T residual covariance and O the divide-by-T factor covariance,
/// distributed F(N, T-N-K) under normal errors.
pub fn grs_test(portfolios: &[&[f64]], factors: &[&[f64]]) -> Result<GrsResult, AptError> {
    let n = portfolios.len();
    let k = factors.len();
    let t = portfolios.first().map_or(0, |p| p.len());
    if n == 0 || k == 0 {
        return Err(AptError::Invalid("need at least one portfolio and one factor".into()));
    }
    if portfolios.iter().chain(factors).any(|s| s.len() != t) {
        return Err(AptError::DateMismatch);
    }
    if t <= n + k {
        return Err(AptError::TooShortSample { t, n, k });
    }
    let f = linalg::columns(factors);
    let x = linalg::with_intercept(&f);
    if linalg::rank(&x) < k + 1 {
        return Err(AptError::SingularCovariance);
    }
    let r = linalg::columns(portfolios);
    let xtx_inv = linalg::inv_spd(&(x.transpose() * &x)).ok_or(AptError::SingularCovariance)?;
    let b: DMatrix<f64> = &xtx_inv * x.transpose() * &r;
    let e = &r - &x * &b;
    let alphas: Vec<f64> = b.row(0).iter().copied().collect();

    let avg_r2 = (0..n)
        .map(|i| {
            let col = r.column(i);
            let m = col.mean();
            let sst: f64 = col.iter().map(|v| (v - m).powi(2)).sum();
            let ssr = e.column(i).norm_squared();
            if sst > 0.0 {
                1.0 - ssr / sst
            } else {
                1.0
            }
        })
        .sum::<f64>()
        / n as f64;

    let scale = r.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let statistic = if alphas.iter().all(|a| a.abs() <= 1e-12 * scale) {
        0.0
    } else {
        let sigma = e.transpose() * &e / t as f64;
        let quad_a = linalg::quad_form_inv(&sigma, &nalgebra::DVector::from_vec(alphas.clone()))
            .ok_or(AptError::SingularCovariance)?;
        let omega = linalg::cov_ml(&f);
        let quad_m = linalg::quad_form_inv(&omega, &linalg::col_means(&f)).ok_or(AptError::SingularCovariance)?;
        (t - n - k) as f64 / n as f64 * quad_a / (1.0 + quad_m)
    };
    let p_value = 1.0 - f_cdf(statistic, n as f64, (t - n - k) as f64);
    Ok(GrsResult {
        statistic,
        p_value,
        avg_r2,
        alphas,
        n,
        t,
        k,
    })
}
