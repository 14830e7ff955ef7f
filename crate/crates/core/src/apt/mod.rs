//! Asset pricing tests: OLS with Newey-West errors, rolling betas,
//! Fama-MacBeth, GRS, and the Bayesian factor-model scan.
//!
//! The Bayesian scan evaluates `a = (1 + Sh(Y)^2) / T` and
//! `k = (Sh_max^2 - Sh(Y)^2) / N` literally. In the original Barillas-Shanken
//! presentation `k` is described as the expected increment to the squared
//! Sharpe ratio, so the role of these scalars may differ from that source.

mod bayes;
mod fmb;
mod grs;
mod report;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use thiserror::Error;

use crate::linalg;
use crate::portfolio::{FactorPanel, PortfolioError, Series, SortResult};

pub use bayes::{
    cumulative_factor_prob, expanding_scan, log_marginal_likelihood, log_q_scalar, max_sharpe_sq, model_key,
    model_scan, prior_sensitivity, q_scalar, BayesParams, ModelPosterior, ScanResult, SensitivityTable,
};
pub use fmb::{fama_macbeth, Exposure, FmbResult};
pub use grs::{grs_test, GrsResult};
pub use report::{
    write_expanding_csv, write_fmb_table, write_grs_table, write_posterior_csv, write_regression_table,
    write_sensitivity_csv, GrsRow, RegressionRow,
};

#[derive(Debug, Error)]
pub enum AptError {
    #[error("regressor matrix is rank deficient")]
    RankDeficient,
    #[error("need at least {need} observations, got {got}")]
    InsufficientHistory { need: usize, got: usize },
    #[error("cross-section has zero variance")]
    ZeroVariance,
    #[error("cross-section of {n} assets is too small for {k} regressors")]
    InsufficientCrossSection { n: usize, k: usize },
    #[error("covariance matrix is singular")]
    SingularCovariance,
    #[error("sample too short: T = {t} with N = {n}, K = {k}")]
    TooShortSample { t: usize, n: usize, k: usize },
    #[error("prior Sharpe bound does not exceed Sh(Y)^2 ({sh_y_sq} >= {sh_max_sq})")]
    NonPositiveK { sh_y_sq: f64, sh_max_sq: f64 },
    #[error("residual cross-product matrix is singular")]
    SingularCrossProduct,
    #[error("series calendars do not align")]
    DateMismatch,
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl From<PortfolioError> for AptError {
    fn from(e: PortfolioError) -> Self {
        match e {
            PortfolioError::DateMismatch => AptError::DateMismatch,
            other => AptError::Invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    /// `s^2 (X'X)^{-1}` with `s^2 = SSR / (T - K)`.
    Classical,
    /// Bartlett-kernel HAC covariance with the given lag.
    NeweyWest(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub r2: f64,
    pub r2_adj: f64,
    pub nobs: usize,
}

/// Least squares of `y` on the columns of `x` (include an intercept column
/// explicitly if wanted).
pub fn ols(y: &[f64], x: &DMatrix<f64>, cov: CovKind) -> Result<RegressionFit, AptError> {
    let (t, k) = x.shape();
    if y.len() != t {
        return Err(AptError::DateMismatch);
    }
    if t <= k {
        return Err(AptError::InsufficientHistory { need: k + 1, got: t });
    }
    if linalg::rank(x) < k {
        return Err(AptError::RankDeficient);
    }
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * x;
    let xtx_inv = linalg::inv_spd(&xtx).ok_or(AptError::RankDeficient)?;
    let beta = x
        .clone()
        .svd(true, true)
        .solve(&yv, f64::EPSILON)
        .map_err(|_| AptError::RankDeficient)?;
    let resid = &yv - x * &beta;
    let ssr = resid.norm_squared();
    let ybar = yv.mean();
    let sst: f64 = yv.iter().map(|v| (v - ybar).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    let r2_adj = 1.0 - (1.0 - r2) * (t - 1) as f64 / (t - k) as f64;
    let covariance = match cov {
        CovKind::Classical => &xtx_inv * (ssr / (t - k) as f64),
        CovKind::NeweyWest(lag) => {
            let mut u = x.clone();
            for (i, mut row) in u.row_iter_mut().enumerate() {
                row *= resid[i];
            }
            let s = newey_west_cov(&u, lag);
            &xtx_inv * (s * t as f64) * &xtx_inv
        }
    };
    let std_errors: Vec<f64> = (0..k).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();
    let t_stats = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    Ok(RegressionFit {
        coefficients: beta.iter().copied().collect(),
        residuals: resid.iter().copied().collect(),
        covariance,
        std_errors,
        t_stats,
        r2,
        r2_adj,
        nobs: t,
    })
}

/// Long-run covariance of the rows of `u` (T x m):
/// `Gamma_0 + sum_{l=1..L} (1 - l/(L+1)) (Gamma_l + Gamma_l')` with
/// `Gamma_l = (1/T) sum_t u_t u_{t-l}'`. No demeaning is applied.
pub fn newey_west_cov(u: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let (t, m) = u.shape();
    let gamma = |l: usize| {
        let mut g = DMatrix::zeros(m, m);
        for s in l..t {
            g += u.row(s).transpose() * u.row(s - l);
        }
        g / t as f64
    };
    let mut s = gamma(0);
    for l in 1..=lag.min(t.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lag + 1) as f64;
        let g = gamma(l);
        s += (&g + g.transpose()) * w;
    }
    s
}

/// Automatic lag `floor(4 (T/100)^(2/9))`.
pub fn nw_lag_rule(t: usize) -> usize {
    (4.0 * (t as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Mean of a series with a Newey-West standard error on the demeaned data.
pub fn nw_mean_t(x: &[f64], lag: Option<usize>) -> (f64, f64) {
    let t = x.len();
    let mean = x.iter().sum::<f64>() / t as f64;
    let u = DMatrix::from_iterator(t, 1, x.iter().map(|v| v - mean));
    let s = newey_west_cov(&u, lag.unwrap_or_else(|| nw_lag_rule(t)))[(0, 0)];
    (mean, mean / (s / t as f64).sqrt())
}

/// Regress a portfolio excess-return series on the named factors with an
/// intercept and HAC errors.
pub fn alpha_regression(
    y: &Series,
    factors: &FactorPanel,
    names: &[&str],
    lag: Option<usize>,
) -> Result<RegressionFit, AptError> {
    let rows = factors.rows_at(&y.months)?;
    let cols: Vec<&[f64]> = names
        .iter()
        .map(|n| rows.column(n).ok_or_else(|| AptError::UnknownFactor(n.to_string())))
        .collect::<Result<_, _>>()?;
    let x = linalg::with_intercept(&linalg::columns(&cols));
    let lag = lag.unwrap_or_else(|| nw_lag_rule(y.len()));
    ols(&y.values, &x, CovKind::NeweyWest(lag))
}

/// Slopes of trailing-window regressions; entry `i` covers observations
/// `[i, i + window)`.
pub fn rolling_betas(asset: &[f64], factors: &[&[f64]], window: usize) -> Result<Vec<Vec<f64>>, AptError> {
    let t = asset.len();
    if t < window || window <= factors.len() + 1 {
        return Err(AptError::InsufficientHistory { need: window, got: t });
    }
    (0..=t - window)
        .map(|s| {
            let cols: Vec<&[f64]> = factors.iter().map(|f| &f[s..s + window]).collect();
            let x = linalg::with_intercept(&linalg::columns(&cols));
            let fit = ols(&asset[s..s + window], &x, CovKind::Classical)?;
            Ok(fit.coefficients[1..].to_vec())
        })
        .collect()
}

/// Cross-sectional z-scores with the population standard deviation.
pub fn standardize(values: &[f64]) -> Result<Vec<f64>, AptError> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if values.len() < 2 || !(sd > 1e-300) {
        return Err(AptError::ZeroVariance);
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// F-distribution CDF.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    FisherSnedecor::new(d1, d2).map(|f| f.cdf(x)).unwrap_or(f64::NAN)
}

/// Long-short of the extreme portfolios of a sort.
pub fn cyber_factor(sort: &SortResult) -> Series {
    sort.long_short_series()
}
