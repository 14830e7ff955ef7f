use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("malformed index line (expected 5 pipe-separated fields, got {fields}): {line}")]
    MalformedLine { line: String, fields: usize },
    #[error("non-numeric CIK `{0}`")]
    BadCik(String),
    #[error("unparseable filing date `{0}`")]
    BadDate(String),
    #[error("empty field `{0}`")]
    EmptyField(&'static str),
    #[error("no dashed separator line found in index file")]
    MissingSeparator,
    #[error("failed to read index: {0}")]
    Io(String),
}

/// One row of an EDGAR full-index file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexEntry {
    pub cik: u64,
    pub company_name: String,
    pub form_type: String,
    pub date_filed: NaiveDate,
    pub filename: String,
}

impl fmt::Display for IndexEntry {
    /// Writes the entry back in the pipe-delimited index layout.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}|{}|{}",
            self.cik,
            self.company_name,
            self.form_type,
            self.date_filed.format("%Y-%m-%d"),
            self.filename
        )
    }
}

/// Parse one `CIK|Company Name|Form Type|Date Filed|Filename` row.
pub fn parse_index_line(line: &str) -> Result<IndexEntry, IndexError> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('|').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(IndexError::MalformedLine {
            line: line.to_string(),
            fields: fields.len(),
        });
    }
    let cik = fields[0]
        .parse::<u64>()
        .ok()
        .filter(|&c| c > 0)
        .ok_or_else(|| IndexError::BadCik(fields[0].to_string()))?;
    let date_filed = NaiveDate::parse_from_str(fields[3], "%Y-%m-%d")
        .map_err(|_| IndexError::BadDate(fields[3].to_string()))?;
    if fields[2].is_empty() {
        return Err(IndexError::EmptyField("form_type"));
    }
    if fields[4].is_empty() {
        return Err(IndexError::EmptyField("filename"));
    }
    Ok(IndexEntry {
        cik,
        company_name: fields[1].to_string(),
        form_type: fields[2].to_string(),
        date_filed,
        filename: fields[4].to_string(),
    })
}

/// Entries of one index file together with the rows that failed to parse.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ParsedIndex {
    pub entries: Vec<IndexEntry>,
    /// (1-based line number, error) for every rejected data row.
    pub warnings: Vec<(usize, IndexError)>,
}

fn is_separator(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 10 && t.chars().all(|c| c == '-')
}

/// Parse a full-index stream: preamble, a dashed separator, then data rows.
///
/// Blank rows after the separator are skipped; rows that fail
/// [`parse_index_line`] become warnings.
pub fn parse_index_file<R: BufRead>(reader: R) -> Result<ParsedIndex, IndexError> {
    let mut out = ParsedIndex::default();
    let mut in_body = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IndexError::Io(e.to_string()))?;
        if !in_body {
            in_body = is_separator(&line);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match parse_index_line(&line) {
            Ok(e) => out.entries.push(e),
            Err(e) => out.warnings.push((i + 1, e)),
        }
    }
    if !in_body {
        return Err(IndexError::MissingSeparator);
    }
    Ok(out)
}

/// Keep entries whose form type is exactly `10-K`, optionally restricted to a
/// CIK whitelist.
pub fn filter_10k(entries: &[IndexEntry], cik_whitelist: Option<&HashSet<u64>>) -> Vec<IndexEntry> {
    entries
        .iter()
        .filter(|e| e.form_type == "10-K")
        .filter(|e| cik_whitelist.map_or(true, |w| w.contains(&e.cik)))
        .cloned()
        .collect()
}
