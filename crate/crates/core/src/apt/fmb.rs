use super::{nw_mean_t, ols, standardize, AptError, CovKind};
use crate::linalg;

/// A cross-sectional regressor observed for every portfolio each month.
#[derive(Debug, Clone, PartialEq)]
pub struct Exposure {
    pub name: String,
    /// `values[t][i]`: exposure of portfolio `i` known at the end of month `t`.
    pub values: Vec<Vec<f64>>,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmbResult {
    /// `const` followed by the exposure names.
    pub names: Vec<String>,
    pub gamma_means: Vec<f64>,
    pub nw_t_stats: Vec<f64>,
    /// One row of estimates per cross-section.
    pub gammas: Vec<Vec<f64>>,
    pub avg_r2_adj: f64,
    pub mape: f64,
}

/// Two-pass Fama-MacBeth second stage: for each month `t >= 1`, regress
/// `returns[t]` on an intercept and the exposures of month `t - 1`.
pub fn fama_macbeth(returns: &[Vec<f64>], exposures: &[Exposure], lag: Option<usize>) -> Result<FmbResult, AptError> {
    let t_len = returns.len();
    let n = returns.first().map_or(0, Vec::len);
    let k = exposures.len();
    if n < k + 2 {
        return Err(AptError::InsufficientCrossSection { n, k });
    }
    if t_len < 3 {
        return Err(AptError::InsufficientHistory { need: 3, got: t_len });
    }
    if returns.iter().any(|r| r.len() != n)
        || exposures
            .iter()
            .any(|e| e.values.len() != t_len || e.values.iter().any(|v| v.len() != n))
    {
        return Err(AptError::DateMismatch);
    }

    let mut gammas = Vec::with_capacity(t_len - 1);
    let mut r2_sum = 0.0;
    let mut abs_err_sum = 0.0;
    for t in 1..t_len {
        let cols: Vec<Vec<f64>> = exposures
            .iter()
            .map(|e| {
                if e.standardize {
                    standardize(&e.values[t - 1])
                } else {
                    Ok(e.values[t - 1].clone())
                }
            })
            .collect::<Result<_, _>>()?;
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let x = linalg::with_intercept(&linalg::columns(&refs));
        let fit = ols(&returns[t], &x, CovKind::Classical)?;
        r2_sum += fit.r2_adj;
        abs_err_sum += fit.residuals.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
        gammas.push(fit.coefficients);
    }
    let periods = gammas.len();
    let mut gamma_means = Vec::with_capacity(k + 1);
    let mut nw_t_stats = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let series: Vec<f64> = gammas.iter().map(|g| g[j]).collect();
        let (m, t) = nw_mean_t(&series, lag);
        gamma_means.push(m);
        nw_t_stats.push(t);
    }
    let mut names = vec!["const".to_string()];
    names.extend(exposures.iter().map(|e| e.name.clone()));
    Ok(FmbResult {
        names,
        gamma_means,
        nw_t_stats,
        gammas,
        avg_r2_adj: r2_sum / periods as f64,
        mape: abs_err_sum / periods as f64,
    })
}
