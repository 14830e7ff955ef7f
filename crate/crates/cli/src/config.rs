//! INI run configuration. Every key can be overridden from the command line
//! as `section.key=value`; overrides win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cyberrisk_core::apt::BayesParams;
use cyberrisk_core::embed::{Mode, TrainParams};
use cyberrisk_core::scoring::{PanelMode, SectionFilter};
use cyberrisk_core::Month;
use ini::Ini;

use crate::error::{CliError, Result};

/// Known keys with their defaults. An empty default means unset.
const KEYS: &[(&str, &str)] = &[
    ("paths.index_dir", ""),
    ("paths.archive_dir", ""),
    ("paths.base_url", ""),
    ("paths.user_agent", "cyberrisk research contact@example.com"),
    ("paths.cache_dir", "cache"),
    ("paths.reference_dir", ""),
    ("paths.returns", ""),
    ("paths.factors", ""),
    ("paths.work_dir", "work"),
    ("paths.exclusions", ""),
    ("paths.cik_whitelist", ""),
    ("paths.stopwords", ""),
    ("paths.common_words", ""),
    ("ingest.min_interval_ms", "100"),
    ("prep.target_len", "40"),
    ("prep.common_cutoff", "100"),
    ("train.mode", "dbow"),
    ("train.vector_size", "200"),
    ("train.window", "15"),
    ("train.min_count", "5"),
    ("train.subsample_t", "0.00001"),
    ("train.negative", "5"),
    ("train.epochs", "50"),
    ("train.initial_lr", "0.025"),
    ("train.infer_epochs", "50"),
    ("train.years", ""),
    ("score.mode", "simple"),
    ("score.exclude_item1a", "false"),
    ("sort.q", "5"),
    ("sort.start", ""),
    ("sort.end", ""),
    ("sort.double_q", "3"),
    ("tests.market", "mkt_rf"),
    ("tests.rf", "rf"),
    ("tests.models", "capm=mkt_rf; ff3=mkt_rf,smb,hml; ff5=mkt_rf,smb,hml,rmw,cma"),
    ("tests.nw_lag", ""),
    ("fmb.portfolios", "20"),
    ("fmb.beta_window", "24"),
    ("fmb.beta_factors", "mkt_rf"),
    ("bayes.candidates", "smb,hml,mom,rmw,cma,cyber"),
    ("bayes.prior_multiple", "1.5"),
    ("bayes.multiples", "1.25,1.5,2,3"),
    ("bayes.min_window", "36"),
    ("run.seed", "1"),
    ("run.workers", "1"),
];

/// Keys that do not affect stage outputs and are left out of manifests.
const NON_SEMANTIC: &[&str] = &["run.workers", "ingest.min_interval_ms", "paths.user_agent"];

#[derive(Debug, Clone)]
pub struct Paths {
    pub base: PathBuf,
    pub index_dir: Option<PathBuf>,
    pub archive_dir: Option<PathBuf>,
    pub base_url: Option<String>,
    pub user_agent: String,
    pub cache_dir: PathBuf,
    pub reference_dir: Option<PathBuf>,
    pub returns: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub exclusions: Option<PathBuf>,
    pub cik_whitelist: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub common_words: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub paths: Paths,
    pub min_interval_ms: u64,
    pub target_len: usize,
    pub common_cutoff: usize,
    pub train: TrainParams,
    pub infer_epochs: usize,
    /// Filing years used for training; empty means all.
    pub train_years: Vec<i32>,
    pub panel_mode: PanelMode,
    pub section_filter: SectionFilter,
    pub q: usize,
    pub start: Option<Month>,
    pub end: Option<Month>,
    pub double_q: usize,
    pub market: String,
    pub rf: String,
    pub models: Vec<(String, Vec<String>)>,
    pub nw_lag: Option<usize>,
    pub fmb_portfolios: usize,
    pub beta_window: usize,
    pub beta_factors: Vec<String>,
    pub bayes: BayesParams,
    pub multiples: Vec<f64>,
    pub min_window: usize,
    pub seed: u64,
    pub workers: usize,
    values: BTreeMap<String, String>,
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn parse<T: std::str::FromStr>(values: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = &values[key];
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse `{v}`")))
}

fn opt<T: std::str::FromStr>(values: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    if values[key].trim().is_empty() {
        Ok(None)
    } else {
        parse(values, key).map(Some)
    }
}

/// `name=f1,f2; name2=f3` model list.
fn parse_models(s: &str) -> Result<Vec<(String, Vec<String>)>> {
    s.split(';')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|m| {
            let (name, factors) = m
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("tests.models: expected name=factors in `{m}`")))?;
            let f = list(factors);
            if f.is_empty() {
                return Err(CliError::Config(format!("tests.models: model `{name}` has no factors")));
            }
            Ok((name.trim().to_string(), f))
        })
        .collect()
}

impl RunConfig {
    /// Read `path` (if any) and apply `overrides`. Relative paths resolve
    /// against the config file's directory, or the working directory.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let base = match path {
            Some(p) => {
                let ini = Ini::load_from_file(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                for (section, props) in ini.iter() {
                    let section = section.unwrap_or("run");
                    for (k, v) in props.iter() {
                        set(&mut values, &format!("{section}.{k}"), v)?;
                    }
                }
                p.parent().map(Path::to_path_buf).unwrap_or_default()
            }
            None => PathBuf::from("."),
        };
        for (k, v) in overrides {
            set(&mut values, k, v)?;
        }
        Self::from_values(values, base)
    }

    fn from_values(values: BTreeMap<String, String>, base: PathBuf) -> Result<Self> {
        let resolve = |key: &str| -> Option<PathBuf> {
            let v = values[key].trim();
            (!v.is_empty()).then(|| base.join(v))
        };
        let existing = |key: &str| -> Result<Option<PathBuf>> {
            match resolve(key) {
                Some(p) if !p.exists() => Err(CliError::Config(format!("{key}: {} does not exist", p.display()))),
                other => Ok(other),
            }
        };
        let paths = Paths {
            index_dir: existing("paths.index_dir")?,
            archive_dir: existing("paths.archive_dir")?,
            base_url: opt(&values, "paths.base_url")?,
            user_agent: values["paths.user_agent"].clone(),
            cache_dir: resolve("paths.cache_dir").unwrap_or_else(|| base.join("cache")),
            reference_dir: existing("paths.reference_dir")?,
            returns: existing("paths.returns")?,
            factors: existing("paths.factors")?,
            work_dir: resolve("paths.work_dir").unwrap_or_else(|| base.join("work")),
            exclusions: existing("paths.exclusions")?,
            cik_whitelist: existing("paths.cik_whitelist")?,
            stopwords: existing("paths.stopwords")?,
            common_words: existing("paths.common_words")?,
            base,
        };
        let mode = match values["train.mode"].trim().to_ascii_lowercase().as_str() {
            "dbow" => Mode::Dbow,
            "dm" => Mode::Dm,
            other => return Err(CliError::Config(format!("train.mode: unknown mode `{other}`"))),
        };
        let seed: u64 = parse(&values, "run.seed")?;
        let workers: usize = parse(&values, "run.workers")?;
        if workers == 0 {
            return Err(CliError::Config("run.workers must be positive".into()));
        }
        let train = TrainParams {
            mode,
            vector_size: parse(&values, "train.vector_size")?,
            window: parse(&values, "train.window")?,
            min_count: parse(&values, "train.min_count")?,
            subsample_t: parse(&values, "train.subsample_t")?,
            negative: parse(&values, "train.negative")?,
            epochs: parse(&values, "train.epochs")?,
            initial_lr: parse(&values, "train.initial_lr")?,
            seed,
            threads: workers,
        };
        train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let panel_mode = match values["score.mode"].trim() {
            "simple" => PanelMode::Simple,
            "long_run" => PanelMode::LongRun,
            other => return Err(CliError::Config(format!("score.mode: unknown mode `{other}`"))),
        };
        let section_filter = if parse::<bool>(&values, "score.exclude_item1a")? {
            SectionFilter::ExcludeItem1a
        } else {
            SectionFilter::All
        };
        let train_years = list(&values["train.years"])
            .iter()
            .map(|y| y.parse().map_err(|_| CliError::Config(format!("train.years: bad year `{y}`"))))
            .collect::<Result<_>>()?;
        let multiples = list(&values["bayes.multiples"])
            .iter()
            .map(|m| m.parse().map_err(|_| CliError::Config(format!("bayes.multiples: bad value `{m}`"))))
            .collect::<Result<_>>()?;
        let q: usize = parse(&values, "sort.q")?;
        if q < 2 {
            return Err(CliError::Config("sort.q must be at least 2".into()));
        }
        let market = values["tests.market"].trim().to_string();
        Ok(Self {
            min_interval_ms: parse(&values, "ingest.min_interval_ms")?,
            target_len: parse(&values, "prep.target_len")?,
            common_cutoff: parse(&values, "prep.common_cutoff")?,
            infer_epochs: parse(&values, "train.infer_epochs")?,
            train_years,
            panel_mode,
            section_filter,
            q,
            start: opt(&values, "sort.start")?,
            end: opt(&values, "sort.end")?,
            double_q: parse(&values, "sort.double_q")?,
            rf: values["tests.rf"].trim().to_string(),
            models: parse_models(&values["tests.models"])?,
            nw_lag: opt(&values, "tests.nw_lag")?,
            fmb_portfolios: parse(&values, "fmb.portfolios")?,
            beta_window: parse(&values, "fmb.beta_window")?,
            beta_factors: list(&values["fmb.beta_factors"]),
            bayes: BayesParams {
                prior_multiple: parse(&values, "bayes.prior_multiple")?,
                market: market.clone(),
                candidates: list(&values["bayes.candidates"]),
            },
            market,
            multiples,
            min_window: parse(&values, "bayes.min_window")?,
            train,
            seed,
            workers,
            paths,
            values,
        })
    }

    /// Semantic key-value pairs, as recorded in stage manifests.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .filter(|(k, _)| !NON_SEMANTIC.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn require<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
        p.as_ref().ok_or_else(|| CliError::Config(format!("{key} is not set")))
    }
}

fn set(values: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<()> {
    match values.get_mut(key) {
        Some(v) => {
            *v = value.to_string();
            Ok(())
        }
        None => Err(CliError::Config(format!("unknown configuration key `{key}`"))),
    }
}

/// Split a `section.key=value` override.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected section.key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
