//! Pipeline stages. Each reads upstream files, writes its outputs under
//! `work_dir/<stage>/` and records a manifest there.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{Datelike, NaiveDate};
use cyberrisk_core::apt::{
    self, alpha_regression, cumulative_factor_prob, expanding_scan, fama_macbeth, grs_test, model_scan,
    nw_lag_rule, nw_mean_t, prior_sensitivity, Exposure, GrsRow, RegressionRow,
};
use cyberrisk_core::edgar::{
    fetch_all, filter_10k, parse_index_file, ContentStore, Fetcher, HttpFetcher, LocalFetcher, ManifestRecord,
    Throttle,
};
use cyberrisk_core::embed::{infer_many, load_model, save_model, train, EmbedError};
use cyberrisk_core::linalg;
use cyberrisk_core::portfolio::{
    double_sort, load_factor_csv, load_return_csv, perf_stats, quantile_sort, write_ledger_jsonl,
    write_sort_series_csv, write_sort_summary_csv, CharPanel, FactorPanel, ReturnPanel, Series, SortConfig,
    SortResult, SummaryRow,
};
use cyberrisk_core::scoring::{
    build_score_panel, filing_scores, load_reference_texts, score_paragraphs, ReferenceCorpus, ReferenceMeta,
    ScoredFiling,
};
use cyberrisk_core::textprep::{preprocess_document, preprocess_reference, Paragraph, Section, StopConfig};
use cyberrisk_core::Month;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{digests, is_up_to_date, write_manifest, Manifest};

pub const STAGES: [&str; 9] = ["ingest", "prep", "train", "score", "sort", "fmb", "grs", "bayes", "report"];

#[derive(Debug, Clone)]
pub struct Outcome {
    pub stage: String,
    pub skipped: bool,
    pub manifest_path: PathBuf,
    /// Run statistics that are logged but not persisted, e.g. network fetches.
    pub transient: BTreeMap<String, f64>,
}

struct StageOutput {
    files: Vec<PathBuf>,
    counts: BTreeMap<String, f64>,
    transient: BTreeMap<String, f64>,
}

impl StageOutput {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            counts: BTreeMap::new(),
            transient: BTreeMap::new(),
        }
    }

    fn count(&mut self, k: &str, v: impl Into<f64>) {
        self.counts.insert(k.to_string(), v.into());
    }
}

fn stage_dir(cfg: &RunConfig, stage: &str) -> PathBuf {
    cfg.paths.work_dir.join(stage)
}

fn upstream(cfg: &RunConfig, stage: &'static str, file: &str) -> Result<PathBuf> {
    let p = stage_dir(cfg, stage).join(file);
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::MissingUpstream(p.display().to_string(), stage))
    }
}

fn run_stage(
    cfg: &RunConfig,
    force: bool,
    stage: &str,
    inputs: Vec<PathBuf>,
    body: impl FnOnce(&Path) -> Result<StageOutput>,
) -> Result<Outcome> {
    let dir = stage_dir(cfg, stage);
    let manifest_path = dir.join("manifest.json");
    let echo = cfg.echo();
    if !force && is_up_to_date(&manifest_path, &cfg.paths.base, &echo, &inputs) {
        log::info!("{stage}: outputs are up to date, skipping (use --force to rerun)");
        return Ok(Outcome {
            stage: stage.to_string(),
            skipped: true,
            manifest_path,
            transient: BTreeMap::new(),
        });
    }
    fs::create_dir_all(&dir)?;
    let out = body(&dir)?;
    let manifest = Manifest {
        stage: stage.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: echo,
        inputs: digests(&cfg.paths.base, &inputs)?,
        outputs: digests(&cfg.paths.base, &out.files)?,
        counts: out.counts,
    };
    write_manifest(&manifest_path, &manifest)?;
    for (k, v) in &out.transient {
        log::info!("{stage}: {k} = {v}");
    }
    log::info!("{stage}: wrote {} files", out.files.len());
    Ok(Outcome {
        stage: stage.to_string(),
        skipped: false,
        manifest_path,
        transient: out.transient,
    })
}

/// Run one stage by name.
pub fn run(cfg: &RunConfig, stage: &str, force: bool) -> Result<Outcome> {
    match stage {
        "ingest" => cmd_ingest(cfg, force),
        "prep" => cmd_prep(cfg, force),
        "train" => cmd_train(cfg, force),
        "score" => cmd_score(cfg, force),
        "sort" => cmd_sort(cfg, force),
        "fmb" => cmd_fmb(cfg, force),
        "grs" => cmd_grs(cfg, force),
        "bayes" => cmd_bayes(cfg, force),
        "report" => cmd_report(cfg, force),
        other => Err(CliError::Config(format!("unknown stage `{other}`"))),
    }
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn read_id_list(path: &Path) -> Result<BTreeSet<u64>> {
    fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .next()
                .unwrap_or(l)
                .trim()
                .parse()
                .map_err(|_| CliError::Data(format!("{}: bad id `{l}`", path.display())))
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    BufReader::new(File::open(path)?)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

pub fn cmd_ingest(cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let index_dir = cfg.require(&cfg.paths.index_dir, "paths.index_dir")?;
    let mut inputs = sorted_files(index_dir)?;
    if let Some(w) = &cfg.paths.cik_whitelist {
        inputs.push(w.clone());
    }
    let index_files = sorted_files(index_dir)?;
    run_stage(cfg, force, "ingest", inputs, |dir| {
        let mut out = StageOutput::new();
        let mut entries = Vec::new();
        let mut warnings = 0;
        for f in &index_files {
            let parsed = parse_index_file(BufReader::new(File::open(f)?))
                .map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
            for (line, w) in &parsed.warnings {
                log::warn!("{}:{line}: {w}", f.display());
            }
            warnings += parsed.warnings.len();
            entries.extend(parsed.entries);
        }
        let whitelist: Option<HashSet<u64>> = match &cfg.paths.cik_whitelist {
            Some(p) => Some(read_id_list(p)?.into_iter().collect()),
            None => None,
        };
        let mut tenk = filter_10k(&entries, whitelist.as_ref());
        tenk.sort_by(|a, b| (a.date_filed, a.cik, &a.filename).cmp(&(b.date_filed, b.cik, &b.filename)));
        tenk.dedup();

        let fetcher: Box<dyn Fetcher> = match (&cfg.paths.archive_dir, &cfg.paths.base_url) {
            (Some(root), _) => Box::new(LocalFetcher::new(root)),
            (None, Some(url)) => Box::new(
                HttpFetcher::new(url.clone(), &cfg.paths.user_agent).map_err(|e| CliError::Config(e.to_string()))?,
            ),
            (None, None) => return Err(CliError::Config("set paths.archive_dir or paths.base_url".into())),
        };
        let store = ContentStore::open(&cfg.paths.cache_dir)?;
        let throttle = Throttle::new(Duration::from_millis(cfg.min_interval_ms));
        let batch = fetch_all(&tenk, fetcher.as_ref(), &store, &throttle, cfg.workers);
        if batch.documents.is_empty() && !tenk.is_empty() {
            return Err(CliError::Data(format!("all {} fetches failed", tenk.len())));
        }
        let fetched = batch.documents.iter().filter(|d| !d.from_cache).count();

        let filings = dir.join("filings.jsonl");
        write_jsonl(&filings, batch.documents.iter().map(ManifestRecord::from))?;
        let failures = dir.join("failures.csv");
        let mut w = csv::Writer::from_path(&failures)?;
        w.write_record(["cik", "date_filed", "filename", "error"])?;
        for (e, err) in &batch.failures {
            log::warn!("fetch {} failed: {err}", e.filename);
            w.write_record([e.cik.to_string(), e.date_filed.to_string(), e.filename.clone(), err.to_string()])?;
        }
        w.flush()?;

        out.files = vec![filings, failures];
        out.count("index_entries", entries.len() as f64);
        out.count("index_warnings", warnings as f64);
        out.count("filings", batch.documents.len() as f64);
        out.count("failures", batch.failures.len() as f64);
        out.transient.insert("fetched".into(), fetched as f64);
        out.transient.insert("cached".into(), (batch.documents.len() - fetched) as f64);
        Ok(out)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParagraphRecord {
    pub doc_id: String,
    pub cik: u64,
    pub filing_date: NaiveDate,
    pub ordinal: usize,
    pub section: Option<Section>,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub meta: ReferenceMeta,
    pub tokens: Vec<String>,
}

fn reference_inputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = vec![dir.join("manifest.csv")];
    for (meta, _) in load_reference_texts(dir)? {
        files.push(dir.join(&meta.filename));
    }
    Ok(files)
}

pub fn cmd_prep(cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let filings = upstream(cfg, "ingest", "filings.jsonl")?;
    let ref_dir = cfg.require(&cfg.paths.reference_dir, "paths.reference_dir")?;
    let mut inputs = vec![filings.clone()];
    inputs.extend(reference_inputs(ref_dir)?);
    inputs.extend(cfg.paths.stopwords.iter().cloned());
    inputs.extend(cfg.paths.common_words.iter().cloned());
    run_stage(cfg, force, "prep", inputs, |dir| {
        let mut out = StageOutput::new();
        let stop = StopConfig::from_files(
            cfg.paths.stopwords.as_deref(),
            cfg.paths.common_words.as_deref(),
            cfg.common_cutoff,
        )?;
        let records: Vec<ManifestRecord> = read_jsonl(&filings)?;
        let mut paragraphs = Vec::new();
        let mut empty = 0;
        for r in &records {
            let text = fs::read_to_string(cfg.paths.cache_dir.join(&r.text_path))
                .map_err(|e| CliError::Data(format!("cached text {}: {e}", r.text_path)))?;
            let doc_id = format!("{}_{}", r.cik, r.date_filed);
            match preprocess_document(&doc_id, &text, &stop, cfg.target_len) {
                Ok(ps) => paragraphs.extend(ps.into_iter().map(|p| ParagraphRecord {
                    doc_id: p.doc_id,
                    cik: r.cik,
                    filing_date: r.date_filed,
                    ordinal: p.ordinal,
                    section: p.source_section,
                    tokens: p.tokens,
                })),
                Err(cyberrisk_core::textprep::TextError::EmptyDocument(d)) => {
                    log::warn!("filing {d} has no usable text");
                    empty += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        let mut refs = Vec::new();
        for (meta, text) in load_reference_texts(ref_dir)? {
            match preprocess_reference(&meta.filename, &text, &stop) {
                Ok(p) => refs.push(ReferenceRecord { meta, tokens: p.tokens }),
                Err(e) => log::warn!("reference {}: {e}", meta.filename),
            }
        }
        if refs.is_empty() {
            return Err(CliError::Data("no usable reference descriptions".into()));
        }
        let total_tokens: usize = paragraphs.iter().map(|p| p.tokens.len()).sum();
        out.count("filings", (records.len() - empty) as f64);
        out.count("empty_filings", empty as f64);
        out.count("paragraphs", paragraphs.len() as f64);
        out.count("references", refs.len() as f64);
        if !paragraphs.is_empty() {
            out.count("mean_paragraph_len", total_tokens as f64 / paragraphs.len() as f64);
        }
        let pp = dir.join("paragraphs.jsonl");
        let rp = dir.join("references.jsonl");
        write_jsonl(&pp, &paragraphs)?;
        write_jsonl(&rp, &refs)?;
        out.files = vec![pp, rp];
        Ok(out)
    })
}

pub fn cmd_train(cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let pp = upstream(cfg, "prep", "paragraphs.jsonl")?;
    let rp = upstream(cfg, "prep", "references.jsonl")?;
    run_stage(cfg, force, "train", vec![pp.clone(), rp.clone()], |dir| {
        let mut out = StageOutput::new();
        let paragraphs: Vec<ParagraphRecord> = read_jsonl(&pp)?;
        let refs: Vec<ReferenceRecord> = read_jsonl(&rp)?;
        let mut corpus: Vec<Paragraph> = paragraphs
            .into_iter()
            .filter(|p| cfg.train_years.is_empty() || cfg.train_years.contains(&p.filing_date.year()))
            .map(|p| Paragraph {
                doc_id: p.doc_id,
                ordinal: p.ordinal,
                tokens: p.tokens,
                source_section: p.section,
            })
            .collect();
        corpus.extend(refs.into_iter().map(|r| Paragraph {
            doc_id: format!("ref:{}", r.meta.filename),
            ordinal: 0,
            tokens: r.tokens,
            source_section: None,
        }));
        let outcome = train(&corpus, &cfg.train)?;
        let model_path = dir.join("model.pvec");
        save_model(&outcome.model, &model_path)?;
        let curve = dir.join("epochs.csv");
        let mut w = csv::Writer::from_path(&curve)?;
        w.write_record(["epoch", "mean_loss", "lr", "targets"])?;
        for e in &outcome.epochs {
            w.write_record([e.epoch.to_string(), e.mean_loss.to_string(), e.lr.to_string(), e.targets.to_string()])?;
        }
        w.flush()?;
        out.count("training_paragraphs", corpus.len() as f64);
        out.count("vocab", outcome.model.vocab.len() as f64);
        if let Some(last) = outcome.epochs.last() {
            out.count("final_loss", last.mean_loss);
        }
        out.files = vec![model_path, curve];
        Ok(out)
    })
}

fn infer_all(
    model: &cyberrisk_core::embed::EmbeddingModel,
    tokens: &[Vec<String>],
    epochs: usize,
    seed: u64,
) -> Result<Vec<Option<Vec<f64>>>> {
    infer_many(model, tokens, epochs, seed)
        .into_iter()
        .map(|r| match r {
            Ok(v) => Ok(Some(v)),
            Err(EmbedError::NoKnownTokens) => Ok(None),
            Err(e) => Err(e.into()),
        })
        .collect()
}

pub fn cmd_score(cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let model_path = upstream(cfg, "train", "model.pvec")?;
    let pp = upstream(cfg, "prep", "paragraphs.jsonl")?;
    let rp = upstream(cfg, "prep", "references.jsonl")?;
    let returns = cfg.require(&cfg.paths.returns, "paths.returns")?.clone();
    let inputs = vec![model_path.clone(), pp.clone(), rp.clone(), returns.clone()];
    run_stage(cfg, force, "score", inputs, |dir| {
        let mut out = StageOutput::new();
        let model = load_model(&model_path)?;
        let refs: Vec<ReferenceRecord> = read_jsonl(&rp)?;
        let ref_tokens: Vec<Vec<String>> = refs.iter().map(|r| r.tokens.clone()).collect();
        let mut meta = Vec::new();
        let mut vectors = Vec::new();
        for (r, v) in refs.iter().zip(infer_all(&model, &ref_tokens, cfg.infer_epochs, cfg.seed)?) {
            match v {
                Some(v) => {
                    meta.push(r.meta.clone());
                    vectors.push(v);
                }
                None => log::warn!("reference {} has no in-vocabulary tokens", r.meta.filename),
            }
        }
        let corpus = ReferenceCorpus::new(meta, vectors)?;

        let paragraphs: Vec<ParagraphRecord> = read_jsonl(&pp)?;
        let tokens: Vec<Vec<String>> = paragraphs.iter().map(|p| p.tokens.clone()).collect();
        let vecs = infer_all(&model, &tokens, cfg.infer_epochs, cfg.seed.wrapping_add(1))?;
        let mut by_doc: BTreeMap<(u64, NaiveDate), Vec<(usize, Option<Section>, Vec<f64>)>> = BTreeMap::new();
        let mut skipped = 0;
        for (p, v) in paragraphs.iter().zip(vecs) {
            match v {
                Some(v) => by_doc.entry((p.cik, p.filing_date)).or_default().push((p.ordinal, p.section, v)),
                None => skipped += 1,
            }
        }
        let mut filings = Vec::with_capacity(by_doc.len());
        for ((cik, filing_date), items) in by_doc {
            filings.push(ScoredFiling {
                cik,
                filing_date,
                paragraphs: score_paragraphs(&items, &corpus)?,
            });
        }

        let par_path = dir.join("paragraph_scores.csv");
        let mut w = csv::Writer::from_path(&par_path)?;
        w.write_record(["cik", "filing_date", "ordinal", "section", "score", "best_reference"])?;
        for f in &filings {
            for p in &f.paragraphs {
                w.write_record([
                    f.cik.to_string(),
                    f.filing_date.to_string(),
                    p.ordinal.to_string(),
                    p.section.map_or("", |s| s.as_str()).to_string(),
                    p.score.to_string(),
                    corpus.meta[p.best_ref].filename.clone(),
                ])?;
            }
        }
        w.flush()?;

        let scores = filing_scores(&filings, cfg.section_filter)?;
        let fs_path = dir.join("filing_scores.csv");
        let mut w = csv::Writer::from_path(&fs_path)?;
        w.write_record(["cik", "filing_date", "score", "n_paragraphs", "item1a_share", "top_paragraphs"])?;
        for s in &scores {
            let top: Vec<String> = s.top_paragraph_ids.iter().map(|i| i.to_string()).collect();
            w.write_record([
                s.cik.to_string(),
                s.filing_date.to_string(),
                s.score.to_string(),
                s.n_paragraphs.to_string(),
                s.item1a_share.to_string(),
                top.join(";"),
            ])?;
        }
        w.flush()?;

        let months = load_return_csv(&returns)?.months();
        let panel = build_score_panel(&filings, &months, cfg.panel_mode, cfg.section_filter)?;
        let panel_path = dir.join("score_panel.csv");
        panel.write_csv(&panel_path)?;

        out.count("references", corpus.len() as f64);
        out.count("filings", scores.len() as f64);
        out.count("paragraphs_skipped", skipped as f64);
        out.count("panel_rows", panel.entries.len() as f64);
        out.files = vec![par_path, fs_path, panel_path];
        Ok(out)
    })
}

fn read_char_panel(path: &Path) -> Result<CharPanel> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut c = CharPanel::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = || CliError::Data(format!("{}: malformed row", path.display()));
        let cik: u64 = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let month: Month = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let score: f64 = rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        c.insert(cik, month, score);
    }
    Ok(c)
}

/// Columns of a `month, name1, name2, ...` CSV in decimals.
fn read_columns(path: &Path) -> Result<(Vec<Month>, Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut months = Vec::new();
    let mut cols = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let bad = || CliError::Data(format!("{}: malformed row", path.display()));
        months.push(rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?);
        for (j, c) in cols.iter_mut().enumerate() {
            c.push(rec.get(j + 1).and_then(|v| v.parse().ok()).ok_or_else(bad)?);
        }
    }
    Ok((months, names, cols))
}

fn factor_series(f: &FactorPanel, name: &str) -> Result<Series> {
    f.series(name)
        .ok_or_else(|| CliError::Config(format!("factor `{name}` not in the factor file")))
}

struct SortInputs {
    returns: ReturnPanel,
    factors: FactorPanel,
    scores: CharPanel,
    rf: Series,
    exclusions: BTreeSet<u64>,
    start: Month,
    end: Month,
}

fn sort_input_paths(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut v = vec![
        cfg.require(&cfg.paths.returns, "paths.returns")?.clone(),
        cfg.require(&cfg.paths.factors, "paths.factors")?.clone(),
        upstream(cfg, "score", "score_panel.csv")?,
    ];
    v.extend(cfg.paths.exclusions.iter().cloned());
    Ok(v)
}

fn load_sort_inputs(cfg: &RunConfig) -> Result<SortInputs> {
    let returns = load_return_csv(cfg.require(&cfg.paths.returns, "paths.returns")?)?;
    let factors = load_factor_csv(cfg.require(&cfg.paths.factors, "paths.factors")?)?;
    let scores = read_char_panel(&upstream(cfg, "score", "score_panel.csv")?)?;
    let rf = factor_series(&factors, &cfg.rf)?;
    let exclusions = match &cfg.paths.exclusions {
        Some(p) => read_id_list(p)?,
        None => BTreeSet::new(),
    };
    let score_months = scores.months();
    let first = *score_months
        .first()
        .ok_or_else(|| CliError::Data("score panel is empty".into()))?;
    let ret_months = returns.months();
    let last_common = ret_months
        .iter()
        .rev()
        .find(|m| factors.months.binary_search(m).is_ok())
        .copied()
        .ok_or_else(|| CliError::Data("returns and factors share no months".into()))?;
    Ok(SortInputs {
        start: cfg.start.unwrap_or(first),
        end: cfg.end.unwrap_or(last_common),
        returns,
        factors,
        scores,
        rf,
        exclusions,
    })
}

fn sort_config(s: &SortInputs, q: usize) -> SortConfig {
    SortConfig {
        q,
        start: s.start,
        end: s.end,
        exclusions: s.exclusions.clone(),
    }
}

fn model_factors<'a>(cfg: &'a RunConfig) -> impl Iterator<Item = (&'a str, Vec<&'a str>)> {
    cfg.models
        .iter()
        .map(|(n, f)| (n.as_str(), f.iter().map(String::as_str).collect()))
}

pub fn cmd_sort(cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let inputs = sort_input_paths(cfg)?;
    run_stage(cfg, force, "sort", inputs, |dir| {
        let mut out = StageOutput::new();
        let si = load_sort_inputs(cfg)?;
        let res = quantile_sort(&si.returns, &si.scores, Some(&si.rf), &sort_config(&si, cfg.q))?;
        let market = factor_series(&si.factors, &cfg.market)?.at(&res.months)?;
        let lag = cfg.nw_lag.unwrap_or_else(|| nw_lag_rule(res.months.len()));

        let mut rows = Vec::new();
        let mut series: Vec<(String, Series)> = (1..=cfg.q).map(|i| (format!("p{i}"), res.portfolio(i))).collect();
        series.push(("long_short".into(), res.long_short_series()));
        for (i, (name, s)) in series.iter().enumerate() {
            let st = perf_stats(&s.values, &market)?;
            let (mean, t) = nw_mean_t(&s.values, Some(lag));
            rows.push(SummaryRow {
                portfolio: name.clone(),
                mean,
                nw_t: t,
                sharpe: st.sharpe,
                treynor: st.treynor,
                sortino: st.sortino,
                avg_count: res.avg_count.get(i).copied(),
                avg_value: res.avg_value.get(i).copied(),
            });
        }

        let mut fits = Vec::new();
        for (name, s) in &series {
            for (model, factors) in model_factors(cfg) {
                let fit = alpha_regression(s, &si.factors, &factors, Some(lag))?;
                let mut terms = vec!["alpha".to_string()];
                terms.extend(factors.iter().map(|f| f.to_string()));
                fits.push((name.clone(), model.to_string(), terms, fit));
            }
        }
        let reg_rows: Vec<RegressionRow> = fits
            .iter()
            .map(|(p, m, terms, fit)| RegressionRow {
                portfolio: p.clone(),
                model: m.clone(),
                terms: terms.clone(),
                fit,
            })
            .collect();

        let series_path = dir.join("series.csv");
        let summary_path = dir.join("summary.csv");
        let ledger_path = dir.join("ledger.jsonl");
        let factor_path = dir.join("cyber_factor.csv");
        let alphas_path = dir.join("alphas.csv");
        write_sort_series_csv(&series_path, &res)?;
        write_sort_summary_csv(&summary_path, &rows)?;
        write_ledger_jsonl(&ledger_path, &res)?;
        let cyber = apt::cyber_factor(&res);
        let mut w = csv::Writer::from_path(&factor_path)?;
        w.write_record(["month", "cyber"])?;
        for (m, v) in cyber.months.iter().zip(&cyber.values) {
            w.write_record([m.to_string(), v.to_string()])?;
        }
        w.flush()?;
        apt::write_regression_table(&alphas_path, &reg_rows)?;
        out.files = vec![
            series_path,
            summary_path,
            ledger_path,
            factor_path,
            alphas_path.clone(),
            alphas_path.with_extension("txt"),
        ];

        if cfg.double_q >= 2 {
            let mut size = CharPanel::new();
            for (m, id, o) in si.returns.iter() {
                if let Some(c) = o.mktcap {
                    size.insert(id, m, c);
                }
            }
            let ds = double_sort(
                &si.returns,
                &size,
                &si.scores,
                Some(&si.rf),
                cfg.double_q,
                cfg.double_q,
                &sort_config(&si, cfg.double_q),
            )?;
            let ds_path = dir.join("double_sort.csv");
            let mut w = csv::Writer::from_path(&ds_path)?;
            w.write_record(["size_bucket", "score_bucket", "mean_excess"])?;
            for (i, row) in ds.grid.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    w.write_record([(i + 1).to_string(), (j + 1).to_string(), v.map_or(String::new(), |x| x.to_string())])?;
                }
            }
            w.flush()?;
            out.count("double_sort_dropped", ds.dropped.len() as f64);
            out.files.push(ds_path);
        }
        out.count("months", res.months.len() as f64);
        out.count("rebalances", res.rebalances.len() as f64);
        out.count("excluded", res.excluded.len() as f64);
        out.count("long_short_mean", rows[cfg.q].mean);
        Ok(out)
    })
}

/// Value-weighted formation-date exposures for the portfolio held in
/// `month`, from per-firm values observed at `asof`.
fn portfolio_exposure(
    res: &SortResult,
    quantile: usize,
    month: Month,
    firm_value: impl Fn(u64, f64) -> Option<f64>,
) -> Option<f64> {
    let formed = *res.rebalances.iter().filter(|r| **r < month).last()?;
    let entry = res.ledger.iter().find(|e| e.month == formed && e.quantile == quantile)?;
    let (mut num, mut den) = (0.0, 0.0);
    for m in &entry.members {
        if let Some(v) = firm_value(m.id, m.value) {
            num += m.weight * v;
            den += m.weight;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Trailing-window OLS slopes of firm excess returns on the beta factors,
/// keyed by (firm, window end month). Windows with a missing return are skipped.
fn firm_betas(si: &SortInputs, names: &[String], window: usize) -> Result<BTreeMap<(u64, Month), Vec<f64>>> {
    let factor_cols: Vec<Series> = names.iter().map(|n| factor_series(&si.factors, n)).collect::<Result<_>>()?;
    let months: Vec<Month> = si
        .returns
        .months()
        .into_iter()
        .filter(|m| si.rf.get(*m).is_some() && factor_cols.iter().all(|f| f.get(*m).is_some()))
        .collect();
    let mut out = BTreeMap::new();
    for id in si.returns.ids() {
        let ex: Vec<Option<f64>> = months
            .iter()
            .map(|&m| si.returns.ret(id, m).map(|r| r - si.rf.get(m).unwrap()))
            .collect();
        for end in window.saturating_sub(1)..months.len() {
            let span = end + 1 - window..=end;
            let Some(y) = ex[span.clone()].iter().copied().collect::<Option<Vec<f64>>>() else {
                continue;
            };
            let cols: Vec<Vec<f64>> = factor_cols
                .iter()
                .map(|f| months[span.clone()].iter().map(|m| f.get(*m).unwrap()).collect())
                .collect();
            let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
            let x = linalg::with_intercept(&linalg::columns(&refs));
            if let Ok(fit) = apt::ols(&y, &x, apt::CovKind::Classical) {
                out.insert((id, months[end]), fit.coefficients[1..].to_vec());
            }
        }
    }
    Ok(out)
}

pub fn cmd_fmb(cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let inputs = sort_input_paths(cfg)?;
    run_stage(cfg, force, "fmb", inputs, |dir| {
        let mut out = StageOutput::new();
        let si = load_sort_inputs(cfg)?;
        let res = quantile_sort(&si.returns, &si.scores, Some(&si.rf), &sort_config(&si, cfg.fmb_portfolios))?;
        let betas = firm_betas(&si, &cfg.beta_factors, cfg.beta_window)?;
        let n = cfg.fmb_portfolios;
        let t_len = res.months.len();

        // Row s holds exposures known at the end of month s for the portfolio
        // held in month s + 1.
        let mut rows: Vec<Option<Vec<Vec<f64>>>> = Vec::with_capacity(t_len);
        for s in 0..t_len {
            let asof = res.months[s];
            let held = asof.succ();
            let mut per_exposure = vec![Vec::with_capacity(n); cfg.beta_factors.len() + 1];
            let mut complete = true;
            'ports: for qn in 1..=n {
                for (j, col) in per_exposure.iter_mut().enumerate() {
                    let v = if j < cfg.beta_factors.len() {
                        portfolio_exposure(&res, qn, held, |id, _| betas.get(&(id, asof)).map(|b| b[j]))
                    } else {
                        portfolio_exposure(&res, qn, held, |_, score| Some(score))
                    };
                    match v {
                        Some(v) => col.push(v),
                        None => {
                            complete = false;
                            break 'ports;
                        }
                    }
                }
            }
            rows.push(complete.then_some(per_exposure));
        }
        let first = rows
            .iter()
            .position(Option::is_some)
            .ok_or_else(|| CliError::Data("no month has complete rolling betas".into()))?;
        // The last row is never used as a regressor; it only has to exist.
        let usable = rows[first..t_len - 1].iter().all(Option::is_some);
        if !usable || t_len - first < 3 {
            return Err(CliError::Data("rolling betas are missing inside the test window".into()));
        }
        let k = cfg.beta_factors.len() + 1;
        let mut values = vec![Vec::new(); k];
        for r in &rows[first..] {
            let r = r.clone().unwrap_or_else(|| vec![vec![0.0; n]; k]);
            for (j, col) in r.into_iter().enumerate() {
                values[j].push(col);
            }
        }
        let returns: Vec<Vec<f64>> = (first..t_len).map(|t| res.portfolios.iter().map(|p| p[t]).collect()).collect();
        let mut exposures: Vec<Exposure> = cfg
            .beta_factors
            .iter()
            .map(|f| Exposure {
                name: format!("beta_{f}"),
                values: Vec::new(),
                standardize: true,
            })
            .collect();
        exposures.push(Exposure {
            name: "score".into(),
            values: Vec::new(),
            standardize: true,
        });
        for (e, v) in exposures.iter_mut().zip(values) {
            e.values = v;
        }
        let fmb = fama_macbeth(&returns, &exposures, cfg.nw_lag)?;
        let path = dir.join("fmb.csv");
        apt::write_fmb_table(&path, &fmb)?;
        out.count("months", (returns.len() - 1) as f64);
        out.count("portfolios", n as f64);
        out.count("score_premium", *fmb.gamma_means.last().unwrap());
        out.count("score_t", *fmb.nw_t_stats.last().unwrap());
        out.files = vec![path.clone(), path.with_extension("txt")];
        Ok(out)
    })
}

fn factors_with_cyber(cfg: &RunConfig) -> Result<FactorPanel> {
    let factors = load_factor_csv(cfg.require(&cfg.paths.factors, "paths.factors")?)?;
    let (months, _, cols) = read_columns(&upstream(cfg, "sort", "cyber_factor.csv")?)?;
    let cyber = Series::new(months.clone(), cols.into_iter().next().unwrap_or_default())?;
    Ok(factors.rows_at(&months)?.with_column("cyber", &cyber)?)
}

pub fn cmd_grs(cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let series = upstream(cfg, "sort", "series.csv")?;
    let cyber = upstream(cfg, "sort", "cyber_factor.csv")?;
    let factors = cfg.require(&cfg.paths.factors, "paths.factors")?.clone();
    run_stage(cfg, force, "grs", vec![series.clone(), cyber, factors], |dir| {
        let mut out = StageOutput::new();
        let panel = factors_with_cyber(cfg)?;
        let (months, names, cols) = read_columns(&series)?;
        let ports: Vec<&[f64]> = names
            .iter()
            .zip(&cols)
            .filter(|(n, _)| n.starts_with('p'))
            .map(|(_, c)| c.as_slice())
            .collect();
        let rows_at = panel.rows_at(&months)?;
        let mut rows = Vec::new();
        for (model, factors) in model_factors(cfg) {
            let f: Vec<&[f64]> = factors
                .iter()
                .map(|n| rows_at.column(n).ok_or_else(|| CliError::Config(format!("factor `{n}` not available"))))
                .collect::<Result<_>>()?;
            let g = grs_test(&ports, &f)?;
            rows.push(GrsRow {
                sort_variable: "score".into(),
                model: model.to_string(),
                grs: g.statistic,
                p_value: g.p_value,
                mean_r2: g.avg_r2,
            });
        }
        let path = dir.join("grs.csv");
        apt::write_grs_table(&path, &rows)?;
        out.count("models", rows.len() as f64);
        out.count("months", months.len() as f64);
        out.files = vec![path.clone(), path.with_extension("txt")];
        Ok(out)
    })
}

pub fn cmd_bayes(cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let cyber = upstream(cfg, "sort", "cyber_factor.csv")?;
    let factors = cfg.require(&cfg.paths.factors, "paths.factors")?.clone();
    run_stage(cfg, force, "bayes", vec![cyber, factors], |dir| {
        let mut out = StageOutput::new();
        let panel = factors_with_cyber(cfg)?;
        let scan = model_scan(&panel, &cfg.bayes)?;
        for (k, e) in &scan.failures {
            log::warn!("model {k}: {e}");
        }
        let post = dir.join("posterior.csv");
        apt::write_posterior_csv(&post, &scan)?;

        let cum = dir.join("cumulative.csv");
        let mut w = csv::Writer::from_path(&cum)?;
        w.write_record(["factor", "cumulative_probability"])?;
        for (f, p) in cumulative_factor_prob(&scan, &cfg.bayes.candidates) {
            w.write_record([f, format!("{p:.10}")])?;
        }
        w.flush()?;

        let months = &panel.months;
        if months.len() < cfg.min_window {
            return Err(CliError::Data(format!(
                "{} months available, expanding scan needs {}",
                months.len(),
                cfg.min_window
            )));
        }
        let grid = &months[cfg.min_window - 1..];
        let scans = expanding_scan(&panel, &cfg.bayes, months[0], grid)?;
        let exp = dir.join("expanding.csv");
        apt::write_expanding_csv(&exp, &scans, &cfg.bayes.candidates)?;

        let sens = dir.join("sensitivity.csv");
        let table = prior_sensitivity(&panel, &cfg.bayes, &cfg.multiples)?;
        apt::write_sensitivity_csv(&sens, &table)?;

        out.count("models", scan.models.len() as f64);
        out.count("failures", scan.failures.len() as f64);
        out.count("top_posterior", scan.ranked()[0].posterior);
        out.count("expanding_months", scans.len() as f64);
        out.files = vec![
            post.clone(),
            post.with_extension("txt"),
            cum,
            exp,
            sens.clone(),
            sens.with_extension("txt"),
        ];
        Ok(out)
    })
}

pub fn cmd_report(cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let parts: [(&'static str, &str, &str); 5] = [
        ("sort", "summary.csv", "Quantile portfolios"),
        ("sort", "alphas.txt", "Factor-model alphas"),
        ("fmb", "fmb.txt", "Fama-MacBeth regressions"),
        ("grs", "grs.txt", "GRS tests"),
        ("bayes", "posterior.txt", "Model posteriors"),
    ];
    let mut inputs = Vec::new();
    for (stage, file, _) in parts {
        inputs.push(upstream(cfg, stage, file)?);
    }
    inputs.push(upstream(cfg, "bayes", "sensitivity.txt")?);
    run_stage(cfg, force, "report", inputs.clone(), |dir| {
        let mut out = StageOutput::new();
        let mut text = String::new();
        for ((_, _, title), path) in parts.iter().zip(&inputs) {
            text.push_str(&format!("== {title} ==\n"));
            text.push_str(&fs::read_to_string(path)?);
            text.push('\n');
        }
        text.push_str("== Prior sensitivity ==\n");
        text.push_str(&fs::read_to_string(inputs.last().unwrap())?);
        let path = dir.join("report.txt");
        fs::write(&path, text)?;
        out.files = vec![path];
        Ok(out)
    })
}
