//! Cosine scoring of paragraph vectors against a reference corpus and
//! aggregation into filing and firm-month scores.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::portfolio::CharPanel;
use crate::textprep::Section;
use crate::Month;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("zero-length vector")]
    ZeroVector,
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("reference corpus is empty")]
    EmptyReferences,
    #[error("reference vector {0} is not finite")]
    NonFiniteReference(usize),
    #[error("filing has no paragraphs to score")]
    EmptyFiling,
    #[error("duplicate filing for cik {cik} on {date}")]
    DuplicateFiling { cik: u64, date: NaiveDate },
    #[error("reference manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, ScoreError> {
    if a.len() != b.len() {
        return Err(ScoreError::DimensionMismatch(a.len(), b.len()));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(ScoreError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Metadata of one reference description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub tactic: String,
    pub technique: String,
    pub sub_technique: String,
    pub filename: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCorpus {
    pub meta: Vec<ReferenceMeta>,
    pub vectors: Vec<Vec<f64>>,
}

impl ReferenceCorpus {
    pub fn new(meta: Vec<ReferenceMeta>, vectors: Vec<Vec<f64>>) -> Result<Self, ScoreError> {
        if vectors.is_empty() || meta.len() != vectors.len() {
            return Err(ScoreError::EmptyReferences);
        }
        for (i, v) in vectors.iter().enumerate() {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(ScoreError::NonFiniteReference(i));
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(ScoreError::ZeroVector);
            }
        }
        Ok(Self { meta, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Read `manifest.csv` (tactic, technique, sub_technique, filename) from a
/// directory of plain-text descriptions; returns metadata and text in
/// manifest order.
pub fn load_reference_texts(dir: &Path) -> Result<Vec<(ReferenceMeta, String)>, ScoreError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(dir.join("manifest.csv"))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<ReferenceMeta>() {
        let meta = rec?;
        let text = fs::read_to_string(dir.join(&meta.filename))
            .map_err(|e| ScoreError::Manifest(format!("{}: {e}", meta.filename)))?;
        out.push((meta, text));
    }
    if out.is_empty() {
        return Err(ScoreError::EmptyReferences);
    }
    Ok(out)
}

/// Highest cosine similarity to any reference, clamped at zero, with the
/// index of the reference that attains it (first on ties).
pub fn paragraph_score(pvec: &[f64], refs: &ReferenceCorpus) -> Result<(f64, usize), ScoreError> {
    if refs.is_empty() {
        return Err(ScoreError::EmptyReferences);
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, r) in refs.vectors.iter().enumerate() {
        let s = cosine_similarity(pvec, r)?;
        if s > best.0 {
            best = (s, i);
        }
    }
    Ok((best.0.max(0.0), best.1))
}

/// `max(1, round(0.01 P))` with round-half-to-even, in integer arithmetic.
pub fn n_top(p: usize) -> usize {
    let (base, rem) = (p / 100, p % 100);
    let rounded = match rem.cmp(&50) {
        std::cmp::Ordering::Greater => base + 1,
        std::cmp::Ordering::Equal => base + base % 2,
        std::cmp::Ordering::Less => base,
    };
    rounded.max(1)
}

/// Mean of the `n_top(P)` largest scores and the positions used, ties at the
/// cutoff going to the earlier position.
pub fn top_share_score(scores: &[f64]) -> Result<(f64, Vec<usize>), ScoreError> {
    if scores.is_empty() {
        return Err(ScoreError::EmptyFiling);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(n_top(scores.len()));
    let mean = idx.iter().map(|&i| scores[i]).sum::<f64>() / idx.len() as f64;
    Ok((mean, idx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphScore {
    pub ordinal: usize,
    pub score: f64,
    pub best_ref: usize,
    pub section: Option<Section>,
}

/// Score each paragraph vector in parallel.
pub fn score_paragraphs(
    vectors: &[(usize, Option<Section>, Vec<f64>)],
    refs: &ReferenceCorpus,
) -> Result<Vec<ParagraphScore>, ScoreError> {
    vectors
        .par_iter()
        .map(|(ordinal, section, v)| {
            let (score, best_ref) = paragraph_score(v, refs)?;
            Ok(ParagraphScore {
                ordinal: *ordinal,
                score,
                best_ref,
                section: *section,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilingScore {
    pub cik: u64,
    pub filing_date: NaiveDate,
    pub score: f64,
    pub n_paragraphs: usize,
    pub top_paragraph_ids: Vec<usize>,
    /// Share of the top paragraphs that come from Item 1A.
    pub item1a_share: f64,
}

pub fn filing_score(cik: u64, filing_date: NaiveDate, paragraphs: &[ParagraphScore]) -> Result<FilingScore, ScoreError> {
    let mut ordered = paragraphs.to_vec();
    ordered.sort_by_key(|p| p.ordinal);
    let values: Vec<f64> = ordered.iter().map(|p| p.score).collect();
    let (score, top) = top_share_score(&values)?;
    let in_1a = top
        .iter()
        .filter(|&&i| ordered[i].section == Some(Section::Item1a))
        .count();
    Ok(FilingScore {
        cik,
        filing_date,
        score,
        n_paragraphs: ordered.len(),
        top_paragraph_ids: top.iter().map(|&i| ordered[i].ordinal).collect(),
        item1a_share: in_1a as f64 / top.len() as f64,
    })
}

/// Expanding arithmetic mean through the latest entry.
pub fn long_run_score(history: &[f64]) -> f64 {
    history.iter().sum::<f64>() / history.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelMode {
    Simple,
    LongRun,
}

impl PanelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PanelMode::Simple => "simple",
            PanelMode::LongRun => "long_run",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionFilter {
    All,
    ExcludeItem1a,
}

/// Paragraph scores of one filing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFiling {
    pub cik: u64,
    pub filing_date: NaiveDate,
    pub paragraphs: Vec<ParagraphScore>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelEntry {
    pub score: f64,
    pub filing_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorePanel {
    pub mode: PanelMode,
    pub entries: BTreeMap<(u64, Month), PanelEntry>,
}

impl ScorePanel {
    pub fn get(&self, cik: u64, month: Month) -> Option<&PanelEntry> {
        self.entries.get(&(cik, month))
    }

    pub fn to_char_panel(&self) -> CharPanel {
        let mut c = CharPanel::new();
        for (&(cik, m), e) in &self.entries {
            c.insert(cik, m, e.score);
        }
        c
    }

    /// `cik, month, score, filing_date, mode`, ordered by cik then month.
    pub fn write_csv(&self, path: &Path) -> Result<(), ScoreError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["cik", "month", "score", "filing_date", "mode"])?;
        for (&(cik, m), e) in &self.entries {
            w.write_record([
                cik.to_string(),
                m.to_string(),
                e.score.to_string(),
                e.filing_date.to_string(),
                self.mode.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Filing-level scores after applying the section filter. Filings left with
/// no paragraphs are skipped.
pub fn filing_scores(filings: &[ScoredFiling], filter: SectionFilter) -> Result<Vec<FilingScore>, ScoreError> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(filings.len());
    for f in filings {
        if !seen.insert((f.cik, f.filing_date)) {
            return Err(ScoreError::DuplicateFiling {
                cik: f.cik,
                date: f.filing_date,
            });
        }
        let kept: Vec<ParagraphScore> = match filter {
            SectionFilter::All => f.paragraphs.clone(),
            SectionFilter::ExcludeItem1a => f
                .paragraphs
                .iter()
                .filter(|p| p.section != Some(Section::Item1a))
                .cloned()
                .collect(),
        };
        match filing_score(f.cik, f.filing_date, &kept) {
            Ok(s) => out.push(s),
            Err(ScoreError::EmptyFiling) => {
                log::warn!("cik {} filing {} has no paragraphs after filtering", f.cik, f.filing_date)
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Map every (cik, month) to the score of the firm's most recent filing.
///
/// A filing takes effect in the month after its filing month. In long-run
/// mode the value is the mean of all the firm's filing scores up to that
/// filing.
pub fn build_score_panel(
    filings: &[ScoredFiling],
    months: &[Month],
    mode: PanelMode,
    filter: SectionFilter,
) -> Result<ScorePanel, ScoreError> {
    let mut by_firm: BTreeMap<u64, Vec<FilingScore>> = BTreeMap::new();
    for s in filing_scores(filings, filter)? {
        by_firm.entry(s.cik).or_default().push(s);
    }
    let mut entries = BTreeMap::new();
    for (cik, mut hist) in by_firm {
        hist.sort_by_key(|s| s.filing_date);
        let effective: Vec<f64> = match mode {
            PanelMode::Simple => hist.iter().map(|s| s.score).collect(),
            PanelMode::LongRun => {
                let raw: Vec<f64> = hist.iter().map(|s| s.score).collect();
                (1..=raw.len()).map(|k| long_run_score(&raw[..k])).collect()
            }
        };
        for &m in months {
            let n = hist.partition_point(|s| Month::of_date(s.filing_date) < m);
            if n > 0 {
                entries.insert(
                    (cik, m),
                    PanelEntry {
                        score: effective[n - 1],
                        filing_date: hist[n - 1].filing_date,
                    },
                );
            }
        }
    }
    Ok(ScorePanel { mode, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(vs: Vec<Vec<f64>>) -> ReferenceCorpus {
        let meta = (0..vs.len())
            .map(|i| ReferenceMeta {
                tactic: format!("t{i}"),
                technique: String::new(),
                sub_technique: String::new(),
                filename: String::new(),
            })
            .collect();
        ReferenceCorpus::new(meta, vs).unwrap()
    }

    #[test]
    fn cosine_exact_cases() {
        let v = [0.3, -1.2, 2.5];
        assert_eq!(cosine_similarity(&v, &v).unwrap(), 1.0);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(cosine_similarity(&v, &neg).unwrap(), -1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(ScoreError::ZeroVector)));
    }

    #[test]
    fn paragraph_score_rules() {
        let p = vec![1.0, 0.0];
        let r = refs(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(paragraph_score(&p, &r).unwrap(), (1.0, 1));
        let r = refs(vec![vec![-1.0, 0.1], vec![-1.0, -0.5]]);
        assert_eq!(paragraph_score(&p, &r).unwrap().0, 0.0);
        let mk = |c: f64| vec![c, (1.0 - c * c).sqrt()];
        let r = refs(vec![mk(0.2), mk(-0.3), mk(0.5)]);
        let (s, i) = paragraph_score(&p, &r).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        assert_eq!(i, 2);
        let scaled: Vec<f64> = p.iter().map(|x| x * 7.5).collect();
        assert_eq!(paragraph_score(&scaled, &r).unwrap(), (s, i));
    }

    #[test]
    fn top_share_rules() {
        assert_eq!(n_top(638), 6);
        assert_eq!(n_top(50), 1);
        assert_eq!(n_top(1), 1);
        assert_eq!(n_top(150), 2);
        assert_eq!(n_top(250), 2);
        assert_eq!(n_top(251), 3);
        let mut s = vec![0.1; 50];
        s[17] = 0.7;
        assert_eq!(top_share_score(&s).unwrap(), (0.7, vec![17]));
        let mut s = vec![0.3; 200];
        s[5] = 0.8;
        s[150] = 0.9;
        let (v, ids) = top_share_score(&s).unwrap();
        assert!((v - 0.85).abs() < 1e-15);
        assert_eq!(ids, vec![150, 5]);
        let ties = vec![0.5; 300];
        assert_eq!(top_share_score(&ties).unwrap().1, vec![0, 1, 2]);
        assert!(matches!(top_share_score(&[]), Err(ScoreError::EmptyFiling)));
    }

    #[test]
    fn long_run_means() {
        assert_eq!(long_run_score(&[0.5]), 0.5);
        assert_eq!(long_run_score(&[0.4, 0.6]), 0.5);
        assert!((long_run_score(&[0.5, 0.6, 0.7]) - 0.6).abs() < 1e-15);
    }

    fn filing(cik: u64, date: &str, score: f64) -> ScoredFiling {
        ScoredFiling {
            cik,
            filing_date: date.parse().unwrap(),
            paragraphs: vec![ParagraphScore {
                ordinal: 0,
                score,
                best_ref: 0,
                section: Some(Section::Other),
            }],
        }
    }

    #[test]
    fn panel_recency_and_long_run() {
        let fs = vec![filing(1, "2020-03-01", 0.5), filing(1, "2021-03-01", 0.6)];
        let months: Vec<Month> = Month::range_inclusive("2019-06".parse().unwrap(), "2021-12".parse().unwrap()).collect();
        let p = build_score_panel(&fs, &months, PanelMode::Simple, SectionFilter::All).unwrap();
        let m = |s: &str| s.parse::<Month>().unwrap();
        assert_eq!(p.get(1, m("2020-12")).unwrap().score, 0.5);
        assert_eq!(p.get(1, m("2021-06")).unwrap().score, 0.6);
        assert!(p.get(1, m("2019-12")).is_none());
        assert!(p.get(1, m("2020-03")).is_none());
        assert!(p.get(1, m("2020-04")).is_some());
        let lr = build_score_panel(&fs, &months, PanelMode::LongRun, SectionFilter::All).unwrap();
        assert!((lr.get(1, m("2021-06")).unwrap().score - 0.55).abs() < 1e-15);
        assert_eq!(lr.get(1, m("2020-12")).unwrap().score, 0.5);
        let dup = vec![filing(1, "2020-03-01", 0.5), filing(1, "2020-03-01", 0.6)];
        assert!(matches!(
            build_score_panel(&dup, &months, PanelMode::Simple, SectionFilter::All),
            Err(ScoreError::DuplicateFiling { .. })
        ));
    }

    #[test]
    fn exclude_item1a_recomputes() {
        let mut f = filing(2, "2020-01-15", 0.2);
        f.paragraphs.push(ParagraphScore {
            ordinal: 1,
            score: 0.9,
            best_ref: 0,
            section: Some(Section::Item1a),
        });
        let all = filing_scores(std::slice::from_ref(&f), SectionFilter::All).unwrap();
        assert_eq!(all[0].score, 0.9);
        assert_eq!(all[0].item1a_share, 1.0);
        let ex = filing_scores(&[f], SectionFilter::ExcludeItem1a).unwrap();
        assert_eq!(ex[0].score, 0.2);
        assert_eq!(ex[0].item1a_share, 0.0);
    }
}
