use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::AptError;
use crate::linalg;
use crate::portfolio::FactorPanel;
use crate::Month;

/// Squared maximum Sharpe ratio `m' O^{-1} m` of a factor set, with the
/// divide-by-T covariance.
pub fn max_sharpe_sq(factors: &[&[f64]]) -> Result<f64, AptError> {
    let y = linalg::columns(factors);
    sharpe_sq_matrix(&y)
}

fn sharpe_sq_matrix(y: &DMatrix<f64>) -> Result<f64, AptError> {
    let omega = linalg::cov_ml(y);
    let mu = linalg::col_means(y);
    if linalg::rank(&omega) < omega.ncols() {
        return Err(AptError::SingularCovariance);
    }
    linalg::quad_form_inv(&omega, &mu).ok_or(AptError::SingularCovariance)
}

/// `ln Q` with `Q = (1 + a/(a+k) W/T)^{-(T-K)/2} (1 + k/a)^{-N/2}`,
/// `a = (1 + Sh(Y)^2)/T`, `k = (Sh_max^2 - Sh(Y)^2)/N`.
pub fn log_q_scalar(w: f64, sh_y_sq: f64, sh_max_sq: f64, t: usize, k: usize, n: usize) -> Result<f64, AptError> {
    if sh_max_sq <= sh_y_sq {
        return Err(AptError::NonPositiveK { sh_y_sq, sh_max_sq });
    }
    if t <= k || n == 0 {
        return Err(AptError::TooShortSample { t, n, k });
    }
    let tf = t as f64;
    let a = (1.0 + sh_y_sq) / tf;
    let kk = (sh_max_sq - sh_y_sq) / n as f64;
    let first = -((t - k) as f64) / 2.0 * (a / (a + kk) * w / tf).ln_1p();
    let second = -(n as f64) / 2.0 * (kk / a).ln_1p();
    Ok(first + second)
}

pub fn q_scalar(w: f64, sh_y_sq: f64, sh_max_sq: f64, t: usize, k: usize, n: usize) -> Result<f64, AptError> {
    log_q_scalar(w, sh_y_sq, sh_max_sq, t, k, n).map(f64::exp)
}

fn residuals(x: &DMatrix<f64>, design: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), AptError> {
    if linalg::rank(design) < design.ncols() {
        return Err(AptError::SingularCrossProduct);
    }
    let inv = linalg::inv_spd(&(design.transpose() * design)).ok_or(AptError::SingularCrossProduct)?;
    let b = inv * design.transpose() * x;
    let e = x - design * &b;
    Ok((b, e))
}

/// Log marginal likelihood of the left-hand block `x` (T x N) given
/// regressors `y` (T x K).
///
/// Unrestricted: `-N/2 ln|Y'Y| - (T-K)/2 ln|S| + ln Q` with S the residual
/// cross-product of the regression with intercepts. Restricted:
/// `-N/2 ln|Y'Y| - (T-K)/2 ln|S_R|` with intercepts excluded.
/// `sh_max_sq` only enters the unrestricted case.
pub fn log_marginal_likelihood(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    restricted: bool,
    sh_max_sq: f64,
) -> Result<f64, AptError> {
    let (t, k) = y.shape();
    let n = x.ncols();
    if x.nrows() != t {
        return Err(AptError::DateMismatch);
    }
    if t <= k + n + 1 {
        return Err(AptError::TooShortSample { t, n, k });
    }
    let yty = y.transpose() * y;
    let ld_yty = linalg::log_det_spd(&yty).ok_or(AptError::SingularCrossProduct)?;
    let base = -(n as f64) / 2.0 * ld_yty;
    let tk = (t - k) as f64 / 2.0;
    if restricted {
        let (_, e) = residuals(x, y)?;
        let ld_s = linalg::log_det_spd(&(e.transpose() * &e)).ok_or(AptError::SingularCrossProduct)?;
        return Ok(base - tk * ld_s);
    }
    let design = linalg::with_intercept(y);
    let (b, e) = residuals(x, &design)?;
    let s = e.transpose() * &e;
    let ld_s = linalg::log_det_spd(&s).ok_or(AptError::SingularCrossProduct)?;
    let alpha = DVector::from_iterator(n, b.row(0).iter().copied());
    let sigma = &s / t as f64;
    let sh_y_sq = sharpe_sq_matrix(y)?;
    let quad = linalg::quad_form_inv(&sigma, &alpha).ok_or(AptError::SingularCrossProduct)?;
    let w = t as f64 * quad / (1.0 + sh_y_sq);
    let log_q = log_q_scalar(w, sh_y_sq, sh_max_sq, t, k, n)?;
    Ok(base - tk * ld_s + log_q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesParams {
    /// `Sh_max = prior_multiple * Sh_Mkt`.
    pub prior_multiple: f64,
    pub market: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelPosterior {
    pub key: String,
    /// Candidate factors included besides the market.
    pub factors: Vec<String>,
    pub log_ml_u: f64,
    pub log_ml_r: f64,
    pub log_ml: f64,
    pub posterior: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    /// Models sorted by key.
    pub models: Vec<ModelPosterior>,
    /// `(key, error)` for models whose likelihood could not be evaluated.
    pub failures: Vec<(String, String)>,
    pub t: usize,
}

impl ScanResult {
    /// Models ordered by descending posterior, then key.
    pub fn ranked(&self) -> Vec<&ModelPosterior> {
        let mut v: Vec<&ModelPosterior> = self.models.iter().collect();
        v.sort_by(|a, b| b.posterior.total_cmp(&a.posterior).then_with(|| a.key.cmp(&b.key)));
        v
    }

    pub fn get(&self, key: &str) -> Option<&ModelPosterior> {
        self.models.iter().find(|m| m.key == key)
    }
}

/// Sorted factor names joined by `+`.
pub fn model_key(market: &str, factors: &[String]) -> String {
    let mut names: Vec<&str> = std::iter::once(market).chain(factors.iter().map(String::as_str)).collect();
    names.sort_unstable();
    names.join("+")
}

fn block(panel: &FactorPanel, names: &[&str]) -> Result<DMatrix<f64>, AptError> {
    let cols: Vec<&[f64]> = names
        .iter()
        .map(|n| panel.column(n).ok_or_else(|| AptError::UnknownFactor(n.to_string())))
        .collect::<Result<_, _>>()?;
    Ok(linalg::columns(&cols))
}

fn evaluate(panel: &FactorPanel, p: &BayesParams, inc: &[&str], exc: &[&str], sh_max_sq: f64) -> Result<(f64, f64), AptError> {
    let mkt = block(panel, &[p.market.as_str()])?;
    let f = block(panel, inc)?;
    let u = log_marginal_likelihood(&mkt, &f, false, sh_max_sq)?;
    let mut regs = vec![p.market.as_str()];
    regs.extend_from_slice(inc);
    let r = log_marginal_likelihood(&block(panel, &regs)?, &block(panel, exc)?, true, sh_max_sq)?;
    Ok((u, r))
}

/// Posterior probabilities of every model `Mkt + F` with F a non-empty
/// proper subset of the candidates, under equal prior model probabilities.
pub fn model_scan(panel: &FactorPanel, p: &BayesParams) -> Result<ScanResult, AptError> {
    let t = panel.months.len();
    let c = p.candidates.len();
    if t < 36 {
        return Err(AptError::InsufficientHistory { need: 36, got: t });
    }
    if c < 2 {
        return Err(AptError::Invalid("need at least two candidate factors".into()));
    }
    if !(p.prior_multiple > 0.0) {
        return Err(AptError::Invalid("prior multiple must be positive".into()));
    }
    let mkt = panel
        .column(&p.market)
        .ok_or_else(|| AptError::UnknownFactor(p.market.clone()))?;
    let sh_max_sq = p.prior_multiple.powi(2) * max_sharpe_sq(&[mkt])?;

    let masks: Vec<u32> = (1..(1u32 << c) - 1).collect();
    let evaluated: Vec<(String, Vec<String>, Result<(f64, f64), AptError>)> = masks
        .par_iter()
        .map(|&mask| {
            let inc: Vec<&str> = (0..c).filter(|i| mask >> i & 1 == 1).map(|i| p.candidates[i].as_str()).collect();
            let exc: Vec<&str> = (0..c).filter(|i| mask >> i & 1 == 0).map(|i| p.candidates[i].as_str()).collect();
            let factors: Vec<String> = inc.iter().map(|s| s.to_string()).collect();
            let key = model_key(&p.market, &factors);
            let res = evaluate(panel, p, &inc, &exc, sh_max_sq);
            (key, factors, res)
        })
        .collect();

    let mut models = Vec::new();
    let mut failures = Vec::new();
    let mut first_err = None;
    for (key, mut factors, res) in evaluated {
        match res {
            Ok((u, r)) if (u + r).is_finite() => {
                factors.sort();
                models.push(ModelPosterior {
                    key,
                    factors,
                    log_ml_u: u,
                    log_ml_r: r,
                    log_ml: u + r,
                    posterior: 0.0,
                });
            }
            Ok(_) => failures.push((key, "non-finite log marginal likelihood".to_string())),
            Err(e) => {
                failures.push((key, e.to_string()));
                first_err.get_or_insert(e);
            }
        }
    }
    if models.is_empty() {
        return Err(first_err.unwrap_or(AptError::Invalid("no model could be evaluated".into())));
    }
    let max = models.iter().map(|m| m.log_ml).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = models.iter().map(|m| (m.log_ml - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for (m, w) in models.iter_mut().zip(&weights) {
        m.posterior = w / total;
    }
    models.sort_by(|a, b| a.key.cmp(&b.key));
    failures.sort();
    Ok(ScanResult { models, failures, t })
}

/// Sum of posteriors of the models containing each candidate.
pub fn cumulative_factor_prob(scan: &ScanResult, candidates: &[String]) -> Vec<(String, f64)> {
    candidates
        .iter()
        .map(|c| {
            let p = scan.models.iter().filter(|m| m.factors.contains(c)).map(|m| m.posterior).sum();
            (c.clone(), p)
        })
        .collect()
}

/// Re-run the scan on windows anchored at `anchor` and ending at each grid month.
pub fn expanding_scan(
    panel: &FactorPanel,
    p: &BayesParams,
    anchor: Month,
    grid: &[Month],
) -> Result<Vec<(Month, ScanResult)>, AptError> {
    grid.par_iter()
        .map(|&m| model_scan(&panel.window(anchor, m), p).map(|s| (m, s)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTable {
    pub multiples: Vec<f64>,
    /// Model key and its posterior under each multiple.
    pub rows: Vec<(String, Vec<f64>)>,
}

/// Posteriors of the union of each multiple's top-5 models.
pub fn prior_sensitivity(panel: &FactorPanel, p: &BayesParams, multiples: &[f64]) -> Result<SensitivityTable, AptError> {
    let scans: Vec<ScanResult> = multiples
        .iter()
        .map(|&m| {
            model_scan(
                panel,
                &BayesParams {
                    prior_multiple: m,
                    ..p.clone()
                },
            )
        })
        .collect::<Result<_, _>>()?;
    let mut keys: Vec<String> = Vec::new();
    for s in &scans {
        for m in s.ranked().into_iter().take(5) {
            if !keys.contains(&m.key) {
                keys.push(m.key.clone());
            }
        }
    }
    let rows = keys
        .into_iter()
        .map(|k| {
            let vals = scans.iter().map(|s| s.get(&k).map_or(0.0, |m| m.posterior)).collect();
            (k, vals)
        })
        .collect();
    Ok(SensitivityTable {
        multiples: multiples.to_vec(),
        rows,
    })
}
