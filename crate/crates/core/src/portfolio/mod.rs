//! Value-weighted quantile portfolios, long-short spreads, double sorts and
//! performance ratios.

mod io;
mod sort;
mod stats;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::Month;

pub use io::{
    load_factor_csv, load_return_csv, write_factor_csv, write_ledger_jsonl, write_return_csv, write_sort_series_csv,
    write_sort_summary_csv, SummaryRow,
};
pub use sort::{
    assign_quantiles, double_sort, exclude_universe, long_short, monthly_weights, quantile_sort, rebalance_dates,
    vw_portfolio_returns, DoubleSortResult, DroppedBucket, LedgerEntry, Member, SortConfig, SortResult,
};
pub use stats::{perf_stats, rolling_correlation, winsorize, PerfStats};

#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error("too few firms at {month}: {have} available for {q} buckets")]
    TooFewFirms { month: Month, have: usize, q: usize },
    #[error("no members with returns in month {month} (portfolio {quantile})")]
    NoMembers { month: Month, quantile: usize },
    #[error("series calendars do not align")]
    DateMismatch,
    #[error("series has zero volatility but non-zero mean")]
    ZeroVolatility,
    #[error("need at least {need} months, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("insufficient overlap: {got} common months, window {window}")]
    InsufficientOverlap { got: usize, window: usize },
    #[error("missing market cap for firm {id} at {month}")]
    MissingCap { id: u64, month: Month },
    #[error("invalid panel row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A monthly series on a strictly increasing calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub months: Vec<Month>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(months: Vec<Month>, values: Vec<f64>) -> Result<Self, PortfolioError> {
        if months.len() != values.len() || months.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PortfolioError::DateMismatch);
        }
        Ok(Self { months, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, month: Month) -> Option<f64> {
        self.months.binary_search(&month).ok().map(|i| self.values[i])
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Values at `months`, failing if any month is missing.
    pub fn at(&self, months: &[Month]) -> Result<Vec<f64>, PortfolioError> {
        months
            .iter()
            .map(|&m| self.get(m).ok_or(PortfolioError::DateMismatch))
            .collect()
    }
}

/// One firm-month observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obs {
    pub ret: Option<f64>,
    pub mktcap: Option<f64>,
}

/// Monthly returns and market capitalizations keyed by firm id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReturnPanel {
    data: BTreeMap<Month, BTreeMap<u64, Obs>>,
}

impl ReturnPanel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u64, month: Month, ret: Option<f64>, mktcap: Option<f64>) -> Result<(), String> {
        if let Some(r) = ret {
            if !(r > -1.0 && r.is_finite()) {
                return Err(format!("return {r} must be finite and > -1"));
            }
        }
        if let Some(c) = mktcap {
            if !(c > 0.0 && c.is_finite()) {
                return Err(format!("market cap {c} must be positive"));
            }
        }
        self.data.entry(month).or_default().insert(id, Obs { ret, mktcap });
        Ok(())
    }

    pub fn get(&self, id: u64, month: Month) -> Option<&Obs> {
        self.data.get(&month)?.get(&id)
    }

    pub fn ret(&self, id: u64, month: Month) -> Option<f64> {
        self.get(id, month)?.ret
    }

    pub fn cap(&self, id: u64, month: Month) -> Option<f64> {
        self.get(id, month)?.mktcap
    }

    pub fn months(&self) -> Vec<Month> {
        self.data.keys().copied().collect()
    }

    pub fn cross_section(&self, month: Month) -> impl Iterator<Item = (u64, &Obs)> {
        self.data.get(&month).into_iter().flat_map(|m| m.iter().map(|(k, v)| (*k, v)))
    }

    pub fn ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.data.values().flat_map(|m| m.keys().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn retain_ids(&mut self, keep: impl Fn(u64) -> bool) {
        for m in self.data.values_mut() {
            m.retain(|id, _| keep(*id));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Month, u64, &Obs)> {
        self.data.iter().flat_map(|(m, xs)| xs.iter().map(move |(id, o)| (*m, *id, o)))
    }
}

/// A firm characteristic observed monthly (scores, betas, sizes).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CharPanel {
    data: BTreeMap<Month, BTreeMap<u64, f64>>,
}

impl CharPanel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u64, month: Month, value: f64) {
        self.data.entry(month).or_default().insert(id, value);
    }

    pub fn get(&self, id: u64, month: Month) -> Option<f64> {
        self.data.get(&month)?.get(&id).copied()
    }

    /// `(id, value)` pairs at `month`, in id order.
    pub fn cross_section(&self, month: Month) -> Vec<(u64, f64)> {
        self.data
            .get(&month)
            .map(|m| m.iter().map(|(k, v)| (*k, *v)).collect())
            .unwrap_or_default()
    }

    pub fn months(&self) -> Vec<Month> {
        self.data.keys().copied().collect()
    }
}

/// Monthly factor returns in decimals, one column per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    pub months: Vec<Month>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl FactorPanel {
    pub fn new(months: Vec<Month>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self, PortfolioError> {
        if names.len() != columns.len()
            || columns.iter().any(|c| c.len() != months.len())
            || months.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(PortfolioError::DateMismatch);
        }
        Ok(Self { months, names, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn series(&self, name: &str) -> Option<Series> {
        self.column(name).map(|c| Series {
            months: self.months.clone(),
            values: c.to_vec(),
        })
    }

    /// Add or replace a column; the series must cover every panel month.
    pub fn with_column(mut self, name: &str, s: &Series) -> Result<Self, PortfolioError> {
        let values = s.at(&self.months)?;
        match self.names.iter().position(|n| n == name) {
            Some(i) => self.columns[i] = values,
            None => {
                self.names.push(name.to_string());
                self.columns.push(values);
            }
        }
        Ok(self)
    }

    /// Rows with `start <= month <= end`.
    pub fn window(&self, start: Month, end: Month) -> Self {
        let idx: Vec<usize> = (0..self.months.len())
            .filter(|&i| self.months[i] >= start && self.months[i] <= end)
            .collect();
        Self {
            months: idx.iter().map(|&i| self.months[i]).collect(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
        }
    }

    /// Rows at exactly `months`, failing if any is absent.
    pub fn rows_at(&self, months: &[Month]) -> Result<Self, PortfolioError> {
        let idx: Vec<usize> = months
            .iter()
            .map(|m| self.months.binary_search(m).map_err(|_| PortfolioError::DateMismatch))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            months: months.to_vec(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
        })
    }
}
