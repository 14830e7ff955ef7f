use super::{PortfolioError, Series};

#[derive(Debug, Clone, PartialEq)]
pub struct PerfStats {
    pub annual_mean: f64,
    pub sharpe: f64,
    pub beta: f64,
    /// `None` when the market beta is numerically zero.
    pub treynor: Option<f64>,
    /// `None` when there are no negative months.
    pub sortino: Option<f64>,
    /// Compounded wealth minus one after each month.
    pub cumulative: Vec<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Annualized ratios of a monthly excess-return series.
///
/// Sharpe uses the sample (n-1) standard deviation, Treynor the OLS beta on
/// `market`, and Sortino the root mean square of `min(r, 0)`.
pub fn perf_stats(excess: &[f64], market: &[f64]) -> Result<PerfStats, PortfolioError> {
    let n = excess.len();
    if n < 12 {
        return Err(PortfolioError::TooShort { need: 12, got: n });
    }
    if market.len() != n {
        return Err(PortfolioError::DateMismatch);
    }
    let mu = mean(excess);
    let sd = (excess.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let sharpe = if sd > 64.0 * f64::EPSILON * mu.abs() && sd > 0.0 {
        mu / sd * 12f64.sqrt()
    } else if mu == 0.0 {
        0.0
    } else {
        return Err(PortfolioError::ZeroVolatility);
    };
    let mm = mean(market);
    let var_m: f64 = market.iter().map(|m| (m - mm).powi(2)).sum();
    let cov: f64 = excess.iter().zip(market).map(|(r, m)| (r - mu) * (m - mm)).sum();
    let beta = if var_m > 0.0 { cov / var_m } else { 0.0 };
    let treynor = (beta.abs() > 1e-12).then(|| 12.0 * mu / beta);
    let downside = (excess.iter().map(|r| r.min(0.0).powi(2)).sum::<f64>() / n as f64).sqrt();
    let sortino = (downside > 0.0).then(|| 12.0 * mu / (downside * 12f64.sqrt()));
    let mut wealth = 1.0;
    let cumulative = excess
        .iter()
        .map(|r| {
            wealth *= 1.0 + r;
            wealth - 1.0
        })
        .collect();
    Ok(PerfStats {
        annual_mean: 12.0 * mu,
        sharpe,
        beta,
        treynor,
        sortino,
        cumulative,
    })
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Trailing-window Pearson correlation over the months both series share.
/// The value at month t covers the `window` common months ending at t.
pub fn rolling_correlation(a: &Series, b: &Series, window: usize) -> Result<Series, PortfolioError> {
    let common: Vec<_> = a.months.iter().filter(|m| b.get(**m).is_some()).copied().collect();
    if window < 2 || common.len() < window {
        return Err(PortfolioError::InsufficientOverlap {
            got: common.len(),
            window,
        });
    }
    let x = a.at(&common)?;
    let y = b.at(&common)?;
    let values = (window - 1..common.len())
        .map(|t| pearson(&x[t + 1 - window..=t], &y[t + 1 - window..=t]))
        .collect();
    Series::new(common[window - 1..].to_vec(), values)
}

/// Linear-interpolation percentile of sorted data (`pct` in [0, 100]).
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Clip values to the `[lower_pct, upper_pct]` percentiles.
pub fn winsorize(values: &[f64], lower_pct: f64, upper_pct: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, lower_pct);
    let hi = percentile(&sorted, upper_pct);
    values.iter().map(|v| v.clamp(lo, hi)).collect()
}
