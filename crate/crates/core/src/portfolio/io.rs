use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{FactorPanel, PortfolioError, ReturnPanel, SortResult};
use crate::Month;

fn invalid(row: usize, reason: impl Into<String>) -> PortfolioError {
    PortfolioError::InvalidRow {
        row,
        reason: reason.into(),
    }
}

fn opt_f64(s: &str, row: usize) -> Result<Option<f64>, PortfolioError> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| invalid(row, format!("bad number `{s}`")))
}

/// Read `id, month, ret, mktcap`; blank `ret` or `mktcap` cells are missing.
pub fn load_return_csv(path: &Path) -> Result<ReturnPanel, PortfolioError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut panel = ReturnPanel::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() < 3 {
            return Err(invalid(row, "expected id, month, ret, mktcap"));
        }
        let id: u64 = rec[0].parse().map_err(|_| invalid(row, format!("bad id `{}`", &rec[0])))?;
        let month: Month = rec[1].parse().map_err(|e: crate::calendar::MonthParseError| invalid(row, e.to_string()))?;
        let ret = opt_f64(&rec[2], row)?;
        let cap = match rec.get(3) {
            Some(c) => opt_f64(c, row)?,
            None => None,
        };
        panel.insert(id, month, ret, cap).map_err(|e| invalid(row, e))?;
    }
    Ok(panel)
}

pub fn write_return_csv(path: &Path, panel: &ReturnPanel) -> Result<(), PortfolioError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "month", "ret", "mktcap"])?;
    let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for (m, id, o) in panel.iter() {
        w.write_record([id.to_string(), m.to_string(), fmt(o.ret), fmt(o.mktcap)])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a monthly factor file in percent and convert to decimals. Column
/// names are lower-cased; the first column is the month.
pub fn load_factor_csv(path: &Path) -> Result<FactorPanel, PortfolioError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let names: Vec<String> = rdr.headers()?.iter().skip(1).map(|h| h.to_ascii_lowercase()).collect();
    let mut months = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != names.len() + 1 {
            return Err(invalid(row, "column count differs from header"));
        }
        let month: Month = rec[0].parse().map_err(|e: crate::calendar::MonthParseError| invalid(row, e.to_string()))?;
        months.push(month);
        for (j, col) in columns.iter_mut().enumerate() {
            let v = opt_f64(&rec[j + 1], row)?.ok_or_else(|| invalid(row, "missing factor value"))?;
            col.push(v / 100.0);
        }
    }
    FactorPanel::new(months, names, columns)
}

/// Write a factor panel back in percent.
pub fn write_factor_csv(path: &Path, panel: &FactorPanel) -> Result<(), PortfolioError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["month".to_string()];
    header.extend(panel.names.iter().cloned());
    w.write_record(&header)?;
    for (i, m) in panel.months.iter().enumerate() {
        let mut rec = vec![m.to_string()];
        rec.extend(panel.columns.iter().map(|c| (c[i] * 100.0).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `month, p1..pq, long_short` in decimal excess returns.
pub fn write_sort_series_csv(path: &Path, res: &SortResult) -> Result<(), PortfolioError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["month".to_string()];
    header.extend((1..=res.q).map(|i| format!("p{i}")));
    header.push("long_short".into());
    w.write_record(&header)?;
    for (t, m) in res.months.iter().enumerate() {
        let mut rec = vec![m.to_string()];
        rec.extend(res.portfolios.iter().map(|p| p[t].to_string()));
        rec.push(res.long_short[t].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub portfolio: String,
    pub mean: f64,
    pub nw_t: f64,
    pub sharpe: f64,
    pub treynor: Option<f64>,
    pub sortino: Option<f64>,
    pub avg_count: Option<f64>,
    pub avg_value: Option<f64>,
}

pub fn write_sort_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), PortfolioError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LedgerLine<'a> {
    Exclusion { ids: &'a [u64] },
    Holding(&'a super::LedgerEntry),
}

/// One JSON object per (rebalance, quantile), preceded by the exclusion record.
pub fn write_ledger_jsonl(path: &Path, res: &SortResult) -> Result<(), PortfolioError> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut line = |v: &LedgerLine| -> Result<(), PortfolioError> {
        serde_json::to_writer(&mut w, v).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        Ok(())
    };
    line(&LedgerLine::Exclusion { ids: &res.excluded })?;
    for e in &res.ledger {
        line(&LedgerLine::Holding(e))?;
    }
    w.flush()?;
    Ok(())
}
