//! CSV and aligned-text renderings of the test results.

use std::fs;
use std::io;
use std::path::Path;

use super::{FmbResult, RegressionFit, ScanResult, SensitivityTable};
use crate::Month;

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// Write `rows` as CSV at `path` and as an aligned table at `path.txt`.
fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;

    let widths: Vec<usize> = (0..header.len())
        .map(|j| rows.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let mut s = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        s.push('\n');
        s
    };
    let mut text = line(header);
    text.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1)));
    text.push('\n');
    for r in rows {
        text.push_str(&line(r));
    }
    fs::write(path.with_extension("txt"), text)
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

fn h(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub struct RegressionRow<'a> {
    pub portfolio: String,
    pub model: String,
    pub terms: Vec<String>,
    pub fit: &'a RegressionFit,
}

/// One line per (portfolio, model, term); coefficients in decimals.
pub fn write_regression_table(path: &Path, rows: &[RegressionRow]) -> io::Result<()> {
    let mut out = Vec::new();
    for r in rows {
        for (j, term) in r.terms.iter().enumerate() {
            out.push(vec![
                r.portfolio.clone(),
                r.model.clone(),
                term.clone(),
                f(r.fit.coefficients[j]),
                f(r.fit.t_stats[j]),
                f(r.fit.r2_adj),
            ]);
        }
    }
    write_table(path, &h(&["portfolio", "model", "term", "coef", "nw_t", "r2_adj"]), &out)
}

/// Gammas in percent per month with Newey-West t-statistics.
pub fn write_fmb_table(path: &Path, res: &FmbResult) -> io::Result<()> {
    let mut rows: Vec<Vec<String>> = res
        .names
        .iter()
        .enumerate()
        .map(|(j, n)| vec![n.clone(), f(100.0 * res.gamma_means[j]), f(res.nw_t_stats[j])])
        .collect();
    rows.push(vec!["avg_r2_adj".into(), f(res.avg_r2_adj), String::new()]);
    rows.push(vec!["mape_pct".into(), f(100.0 * res.mape), String::new()]);
    write_table(path, &h(&["term", "gamma_pct", "nw_t"]), &rows)
}

pub struct GrsRow {
    pub sort_variable: String,
    pub model: String,
    pub grs: f64,
    pub p_value: f64,
    pub mean_r2: f64,
}

pub fn write_grs_table(path: &Path, rows: &[GrsRow]) -> io::Result<()> {
    let out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.sort_variable.clone(), r.model.clone(), f(r.grs), f(r.p_value), f(r.mean_r2)])
        .collect();
    write_table(path, &h(&["sort_variable", "model", "grs", "p_value", "mean_r2"]), &out)
}

/// Models by descending posterior.
pub fn write_posterior_csv(path: &Path, scan: &ScanResult) -> io::Result<()> {
    let rows: Vec<Vec<String>> = scan
        .ranked()
        .iter()
        .map(|m| {
            vec![
                m.key.clone(),
                format!("{:.6}", m.log_ml_u),
                format!("{:.6}", m.log_ml_r),
                format!("{:.6}", m.log_ml),
                format!("{:.10}", m.posterior),
            ]
        })
        .collect();
    write_table(path, &h(&["model", "log_ml_u", "log_ml_r", "log_ml", "posterior"]), &rows)
}

/// Long format: month, model, posterior, plus cumulative probability rows
/// per candidate (`model` = `cum:<factor>`).
pub fn write_expanding_csv(path: &Path, scans: &[(Month, ScanResult)], candidates: &[String]) -> io::Result<()> {
    let mut rows = Vec::new();
    for (m, s) in scans {
        for model in &s.models {
            rows.push(vec![m.to_string(), model.key.clone(), format!("{:.10}", model.posterior)]);
        }
        for (c, p) in super::cumulative_factor_prob(s, candidates) {
            rows.push(vec![m.to_string(), format!("cum:{c}"), format!("{p:.10}")]);
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["month", "model", "posterior"]).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_sensitivity_csv(path: &Path, table: &SensitivityTable) -> io::Result<()> {
    let mut header = vec!["model".to_string()];
    header.extend(table.multiples.iter().map(|m| format!("multiple_{m}")));
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|(k, vs)| {
            let mut r = vec![k.clone()];
            r.extend(vs.iter().map(|v| format!("{v:.6}")));
            r
        })
        .collect();
    write_table(path, &header, &rows)
}
