//! Self-contained synthetic inputs for a full offline pipeline run: EDGAR
//! index files, an archive of HTML 10-K filings, a reference corpus, a
//! firm-month return file, a factor file and a config pointing at them.
//!
//! Each firm has a fixed cyber intensity in [0, 1]. Its Item 1A paragraphs
//! draw that share of tokens from the vocabulary the reference descriptions
//! use, and its expected monthly return rises with the intensity.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cyberrisk_core::Month;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;

pub const FIRST_YEAR: i32 = 2010;
pub const LAST_YEAR: i32 = 2015;
const SYLLABLES: [&str; 10] = ["ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pu"];
const CYBER: &str = "zor";
const GENERIC: [&str; 2] = ["bal", "fen"];

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub n_firms: usize,
    /// Monthly return per unit of cyber intensity.
    pub premium: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_firms: 40,
            premium: 0.01,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub config: PathBuf,
    pub ciks: Vec<u64>,
    pub intensity: Vec<f64>,
    /// A listed 10-K whose archive document is absent.
    pub missing_filing: String,
}

fn word(prefix: &str, i: usize) -> String {
    format!("{prefix}{}{}", SYLLABLES[i / 10 % 10], SYLLABLES[i % 10])
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    mean + sd * rng.sample::<f64, _>(StandardNormal)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or(String::new(), |f| f.to_uppercase().chain(c).collect())
}

/// Four ten-word sentences; each token is a cyber word with probability `share`.
fn paragraph(rng: &mut ChaCha8Rng, share: f64, generic: &str) -> String {
    let mut out = String::new();
    for s in 0..4 {
        let words: Vec<String> = (0..10)
            .map(|_| {
                if rng.gen_bool(share.clamp(0.0, 1.0)) {
                    word(CYBER, rng.gen_range(0..40))
                } else {
                    word(generic, rng.gen_range(0..60))
                }
            })
            .collect();
        if s > 0 {
            out.push(' ');
        }
        out.push_str(&capitalize(&words.join(" ")));
        out.push('.');
    }
    out
}

fn filing_html(rng: &mut ChaCha8Rng, company: &str, year: i32, intensity: f64) -> String {
    let mut h = format!("<html><head><title>{company} 10-K {year}</title></head><body>\n");
    h.push_str("<h2>Item 1. Business</h2>\n");
    for _ in 0..5 {
        let _ = writeln!(h, "<p>{}</p>", paragraph(rng, 0.0, GENERIC[0]));
    }
    h.push_str("<h2>Item 1A. Risk Factors</h2>\n");
    for _ in 0..6 {
        let share = (0.8 * intensity + normal(rng, 0.0, 0.05)).clamp(0.0, 0.95);
        let _ = writeln!(h, "<p>{}</p>", paragraph(rng, share, GENERIC[1]));
    }
    h.push_str("<h2>Item 1B. Unresolved Staff Comments</h2>\n<p>None.</p>\n");
    h.push_str("<h2>Item 2. Properties</h2>\n");
    for _ in 0..2 {
        let _ = writeln!(h, "<p>{}</p>", paragraph(rng, 0.0, GENERIC[0]));
    }
    h.push_str("</body></html>\n");
    h
}

fn index_header(year: i32, q: u32) -> String {
    format!(
        "Description:           Master Index of EDGAR Dissemination Feed by Form Type\n\
         Last Data Received:    {year} QTR{q}\n\
         \n\
         CIK|Company Name|Form Type|Date Filed|Filename\n\
         --------------------------------------------------------------------------------\n"
    )
}

/// Write the fixture tree under `dir` and return the config location.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for sub in ["index", "archive", "references"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let ciks: Vec<u64> = (0..spec.n_firms as u64).map(|i| 810_001 + 7 * i).collect();
    let intensity: Vec<f64> = (0..spec.n_firms).map(|_| rng.gen_range(0.0..1.0)).collect();

    let mut missing_filing = String::new();
    for year in FIRST_YEAR..=LAST_YEAR {
        let mut q1 = index_header(year, 1);
        let mut q2 = index_header(year, 2);
        for (i, &cik) in ciks.iter().enumerate() {
            let company = format!("SYNTHETIC HOLDINGS {i:02} INC");
            let day = 1 + (i % 28) as u32;
            let accession = format!("0000{cik}-{:02}-000001", year % 100);
            let filename = format!("edgar/data/{cik}/{accession}.txt");
            let _ = writeln!(q1, "{cik}|{company}|10-K|{year}-03-{day:02}|{filename}");
            let _ = writeln!(q2, "{cik}|{company}|10-Q|{year}-05-{day:02}|edgar/data/{cik}/{accession}-q.txt");
            if year == LAST_YEAR && i == spec.n_firms - 1 {
                missing_filing = filename;
                continue;
            }
            let path = dir.join("archive").join(&filename);
            fs::create_dir_all(path.parent().unwrap())?;
            fs::write(path, filing_html(&mut rng, &company, year, intensity[i]))?;
        }
        q1.push_str("malformed row without enough fields\n");
        fs::write(dir.join(format!("index/{year}-QTR1.idx")), q1)?;
        fs::write(dir.join(format!("index/{year}-QTR2.idx")), q2)?;
    }

    let mut manifest = String::from("tactic,technique,sub_technique,filename\n");
    let tactics = ["initial-access", "execution", "persistence", "exfiltration", "impact", "collection"];
    for (k, tactic) in tactics.iter().enumerate() {
        let name = format!("t{k:04}.txt");
        let _ = writeln!(manifest, "{tactic},T{:04},,{name}", 1000 + k);
        let text: Vec<String> = (0..4)
            .map(|_| {
                let ws: Vec<String> = (0..10).map(|_| word(CYBER, rng.gen_range(0..40))).collect();
                format!("{}.", capitalize(&ws.join(" ")))
            })
            .collect();
        fs::write(dir.join("references").join(name), text.join(" "))?;
    }
    fs::write(dir.join("references/manifest.csv"), manifest)?;

    // Returns and factors start two years before the first filing so that
    // rolling betas exist once portfolios form.
    let start = Month::new(FIRST_YEAR - 2, 1).expect("valid month");
    let end = Month::new(LAST_YEAR + 1, 12).expect("valid month");
    let months: Vec<Month> = Month::range_inclusive(start, end).collect();
    let rf = 0.001;
    let mut factors = String::from("month,mkt_rf,smb,hml,mom,rmw,cma,rf\n");
    let mut mkt = Vec::with_capacity(months.len());
    for m in &months {
        let f: Vec<f64> = [(0.006, 0.045), (0.002, 0.03), (0.003, 0.03), (0.005, 0.04), (0.003, 0.02), (0.003, 0.02)]
            .iter()
            .map(|&(mu, sd)| normal(&mut rng, mu, sd))
            .collect();
        mkt.push(f[0]);
        let cells: Vec<String> = f.iter().chain([&rf]).map(|v| format!("{:.6}", 100.0 * v)).collect();
        let _ = writeln!(factors, "{m},{}", cells.join(","));
    }
    fs::write(dir.join("factors.csv"), factors)?;

    let mut returns = String::from("id,month,ret,mktcap\n");
    for (i, &cik) in ciks.iter().enumerate() {
        let beta = rng.gen_range(0.8..1.2);
        let mut cap = 1000.0 * normal(&mut rng, 0.0, 1.0).exp();
        for (t, m) in months.iter().enumerate() {
            let r = (rf + beta * mkt[t] + spec.premium * intensity[i] + normal(&mut rng, 0.0, 0.06)).max(-0.9);
            cap *= 1.0 + r;
            let _ = writeln!(returns, "{cik},{m},{r:.8},{cap:.4}");
        }
    }
    fs::write(dir.join("returns.csv"), returns)?;

    let config = dir.join("config.ini");
    fs::write(
        &config,
        "[paths]\n\
         index_dir = index\n\
         archive_dir = archive\n\
         reference_dir = references\n\
         returns = returns.csv\n\
         factors = factors.csv\n\
         cache_dir = cache\n\
         work_dir = work\n\
         \n\
         [ingest]\n\
         min_interval_ms = 0\n\
         \n\
         [train]\n\
         vector_size = 32\n\
         window = 5\n\
         min_count = 1\n\
         subsample_t = 1.0\n\
         epochs = 10\n\
         infer_epochs = 20\n\
         \n\
         [sort]\n\
         double_q = 2\n\
         \n\
         [fmb]\n\
         portfolios = 10\n\
         \n\
         [run]\n\
         seed = 1\n",
    )?;
    Ok(Fixture {
        config,
        ciks,
        intensity,
        missing_filing,
    })
}
