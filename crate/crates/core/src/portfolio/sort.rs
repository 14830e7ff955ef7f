use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CharPanel, PortfolioError, ReturnPanel, Series};
use crate::Month;

/// Quantile labels `1..=q` by rank of `(value, id)`; label = floor(rank q / n) + 1.
///
/// Ties are ordered by firm id, so bucket sizes differ by at most one.
pub fn assign_quantiles(values: &[(u64, f64)], q: usize, month: Month) -> Result<BTreeMap<u64, usize>, PortfolioError> {
    if q == 0 {
        return Err(PortfolioError::Config("q must be positive".into()));
    }
    let n = values.len();
    if n < q {
        return Err(PortfolioError::TooFewFirms { month, have: n, q });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(rank, (id, _))| (*id, rank * q / n + 1))
        .collect())
}

/// Last month of every calendar quarter that intersects `[start, end]`,
/// clipped to `end`.
pub fn rebalance_dates(start: Month, end: Month) -> Vec<Month> {
    let mut out = Vec::new();
    let mut m = start;
    while m <= end {
        let q_end = m.plus(((3 - m.month() % 3) % 3) as i64);
        out.push(q_end.min(end));
        m = q_end.succ();
    }
    out
}

/// Effective weights of a formation-date holding in `month`: caps fixed at
/// formation, renormalized over members that report a return.
pub fn monthly_weights(holdings: &[(u64, f64)], panel: &ReturnPanel, month: Month) -> Vec<(u64, f64)> {
    let live: Vec<(u64, f64)> = holdings
        .iter()
        .filter(|(id, _)| panel.ret(*id, month).is_some())
        .copied()
        .collect();
    let total: f64 = live.iter().map(|(_, c)| c).sum();
    live.into_iter().map(|(id, c)| (id, c / total)).collect()
}

fn holding_return(holdings: &[(u64, f64)], panel: &ReturnPanel, month: Month) -> Option<f64> {
    let w = monthly_weights(holdings, panel, month);
    if w.is_empty() {
        return None;
    }
    Some(w.iter().map(|(id, w)| w * panel.ret(*id, month).expect("filtered")).sum())
}

/// Value-weighted returns of one fixed membership over `months`.
pub fn vw_portfolio_returns(
    holdings: &[(u64, f64)],
    panel: &ReturnPanel,
    months: &[Month],
) -> Result<Vec<f64>, PortfolioError> {
    months
        .iter()
        .map(|&m| holding_return(holdings, panel, m).ok_or(PortfolioError::NoMembers { month: m, quantile: 1 }))
        .collect()
}

pub fn long_short(high: &Series, low: &Series) -> Result<Series, PortfolioError> {
    if high.months != low.months {
        return Err(PortfolioError::DateMismatch);
    }
    Ok(Series {
        months: high.months.clone(),
        values: high.values.iter().zip(&low.values).map(|(h, l)| h - l).collect(),
    })
}

/// Drop listed firms; returns the reduced panel and the ids that matched.
pub fn exclude_universe(panel: &ReturnPanel, exclusions: &BTreeSet<u64>) -> (ReturnPanel, Vec<u64>) {
    let present: BTreeSet<u64> = panel.ids().into_iter().collect();
    let matched: Vec<u64> = exclusions.intersection(&present).copied().collect();
    let mut out = panel.clone();
    out.retain_ids(|id| !exclusions.contains(&id));
    (out, matched)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortConfig {
    pub q: usize,
    pub start: Month,
    pub end: Month,
    pub exclusions: BTreeSet<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: u64,
    pub weight: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub month: Month,
    pub quantile: usize,
    pub members: Vec<Member>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortResult {
    pub q: usize,
    pub months: Vec<Month>,
    /// Monthly excess returns of portfolios 1..=q (index 0 is the lowest).
    pub portfolios: Vec<Vec<f64>>,
    pub long_short: Vec<f64>,
    pub avg_count: Vec<f64>,
    pub avg_value: Vec<f64>,
    pub rebalances: Vec<Month>,
    pub ledger: Vec<LedgerEntry>,
    pub excluded: Vec<u64>,
}

impl SortResult {
    pub fn portfolio(&self, quantile: usize) -> Series {
        Series {
            months: self.months.clone(),
            values: self.portfolios[quantile - 1].clone(),
        }
    }

    pub fn long_short_series(&self) -> Series {
        Series {
            months: self.months.clone(),
            values: self.long_short.clone(),
        }
    }
}

/// `(id, value, cap)` for firms sortable at `month`.
fn universe(chars: &CharPanel, panel: &ReturnPanel, month: Month, excl: &BTreeSet<u64>) -> Vec<(u64, f64, f64)> {
    chars
        .cross_section(month)
        .into_iter()
        .filter(|(id, v)| !excl.contains(id) && v.is_finite())
        .filter_map(|(id, v)| panel.cap(id, month).map(|c| (id, v, c)))
        .collect()
}

fn return_months(rebalances: &[Month], end: Month) -> Vec<Month> {
    match rebalances.first() {
        Some(first) if *first < end => Month::range_inclusive(first.succ(), end).collect(),
        _ => Vec::new(),
    }
}

/// Index of the latest rebalance strictly before `month`.
fn formation_index(rebalances: &[Month], month: Month) -> usize {
    rebalances.partition_point(|r| *r < month) - 1
}

fn rf_at(rf: Option<&Series>, month: Month) -> Result<f64, PortfolioError> {
    match rf {
        Some(s) => s.get(month).ok_or(PortfolioError::DateMismatch),
        None => Ok(0.0),
    }
}

/// Single sort: at every quarterly rebalance assign sortable firms to `q`
/// buckets on `chars`, hold value-weighted, and report excess returns.
pub fn quantile_sort(
    panel: &ReturnPanel,
    chars: &CharPanel,
    rf: Option<&Series>,
    cfg: &SortConfig,
) -> Result<SortResult, PortfolioError> {
    let (panel, excluded) = exclude_universe(panel, &cfg.exclusions);
    let rebalances = rebalance_dates(cfg.start, cfg.end);
    let q = cfg.q;
    let mut holdings: Vec<Vec<Vec<(u64, f64)>>> = Vec::with_capacity(rebalances.len());
    let mut ledger = Vec::new();
    let mut count_sum = vec![0.0; q];
    let mut value_sum = vec![0.0; q];
    for &r in &rebalances {
        let uni = universe(chars, &panel, r, &cfg.exclusions);
        let labels = assign_quantiles(&uni.iter().map(|(id, v, _)| (*id, *v)).collect::<Vec<_>>(), q, r)?;
        let mut buckets: Vec<Vec<(u64, f64, f64)>> = vec![Vec::new(); q];
        for &(id, v, c) in &uni {
            buckets[labels[&id] - 1].push((id, v, c));
        }
        for (b, members) in buckets.iter().enumerate() {
            let total: f64 = members.iter().map(|m| m.2).sum();
            count_sum[b] += members.len() as f64;
            value_sum[b] += members.iter().map(|m| m.1).sum::<f64>() / members.len() as f64;
            ledger.push(LedgerEntry {
                month: r,
                quantile: b + 1,
                members: members
                    .iter()
                    .map(|&(id, v, c)| Member {
                        id,
                        weight: c / total,
                        value: v,
                    })
                    .collect(),
            });
        }
        holdings.push(
            buckets
                .into_iter()
                .map(|b| b.into_iter().map(|(id, _, c)| (id, c)).collect())
                .collect(),
        );
    }

    let months = return_months(&rebalances, cfg.end);
    let mut portfolios = vec![Vec::with_capacity(months.len()); q];
    for &m in &months {
        let f = formation_index(&rebalances, m);
        let rf = rf_at(rf, m)?;
        for (b, h) in holdings[f].iter().enumerate() {
            let r = holding_return(h, &panel, m).ok_or(PortfolioError::NoMembers { month: m, quantile: b + 1 })?;
            portfolios[b].push(r - rf);
        }
    }
    let long_short = portfolios[q - 1].iter().zip(&portfolios[0]).map(|(h, l)| h - l).collect();
    let n_reb = rebalances.len().max(1) as f64;
    Ok(SortResult {
        q,
        months,
        portfolios,
        long_short,
        avg_count: count_sum.iter().map(|c| c / n_reb).collect(),
        avg_value: value_sum.iter().map(|v| v / n_reb).collect(),
        rebalances,
        ledger,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedBucket {
    pub month: Month,
    pub first_bucket: usize,
    pub have: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleSortResult {
    pub q1: usize,
    pub q2: usize,
    pub months: Vec<Month>,
    /// `cells[i][j][t]`: excess return of first-sort bucket i+1, second-sort
    /// bucket j+1 in month t, absent when the bucket was dropped.
    pub cells: Vec<Vec<Vec<Option<f64>>>>,
    /// Time-mean of each cell over available months.
    pub grid: Vec<Vec<Option<f64>>>,
    pub dropped: Vec<DroppedBucket>,
}

/// Sequential double sort: `q1` buckets on `first`, then `q2` buckets on
/// `second` within each.
pub fn double_sort(
    panel: &ReturnPanel,
    first: &CharPanel,
    second: &CharPanel,
    rf: Option<&Series>,
    q1: usize,
    q2: usize,
    cfg: &SortConfig,
) -> Result<DoubleSortResult, PortfolioError> {
    let (panel, _) = exclude_universe(panel, &cfg.exclusions);
    let rebalances = rebalance_dates(cfg.start, cfg.end);
    let mut dropped = Vec::new();
    let mut holdings: Vec<Vec<Option<Vec<Vec<(u64, f64)>>>>> = Vec::new();
    for &r in &rebalances {
        let uni: Vec<(u64, f64, f64, f64)> = universe(first, &panel, r, &cfg.exclusions)
            .into_iter()
            .filter_map(|(id, v1, c)| second.get(id, r).filter(|v| v.is_finite()).map(|v2| (id, v1, v2, c)))
            .collect();
        let l1 = assign_quantiles(&uni.iter().map(|u| (u.0, u.1)).collect::<Vec<_>>(), q1, r)?;
        let mut per_reb = Vec::with_capacity(q1);
        for b in 1..=q1 {
            let inner: Vec<&(u64, f64, f64, f64)> = uni.iter().filter(|u| l1[&u.0] == b).collect();
            match assign_quantiles(&inner.iter().map(|u| (u.0, u.2)).collect::<Vec<_>>(), q2, r) {
                Ok(l2) => {
                    let mut cells = vec![Vec::new(); q2];
                    for u in inner {
                        cells[l2[&u.0] - 1].push((u.0, u.3));
                    }
                    per_reb.push(Some(cells));
                }
                Err(PortfolioError::TooFewFirms { have, .. }) => {
                    log::warn!("double sort: first bucket {b} at {r} has {have} firms, dropped");
                    dropped.push(DroppedBucket {
                        month: r,
                        first_bucket: b,
                        have,
                    });
                    per_reb.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        holdings.push(per_reb);
    }

    let months = return_months(&rebalances, cfg.end);
    let mut cells = vec![vec![Vec::with_capacity(months.len()); q2]; q1];
    for &m in &months {
        let f = formation_index(&rebalances, m);
        let rf = rf_at(rf, m)?;
        for (i, bucket) in holdings[f].iter().enumerate() {
            for j in 0..q2 {
                let r = bucket
                    .as_ref()
                    .and_then(|b| holding_return(&b[j], &panel, m))
                    .map(|r| r - rf);
                cells[i][j].push(r);
            }
        }
    }
    let grid = cells
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| {
                    let vals: Vec<f64> = c.iter().flatten().copied().collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect()
        })
        .collect();
    Ok(DoubleSortResult {
        q1,
        q2,
        months,
        cells,
        grid,
        dropped,
    })
}
