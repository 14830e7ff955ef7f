//! Seeded synthetic inputs for tests, demos and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::textprep::Paragraph;

/// Token `i` of topic `k`, e.g. `t1w07`.
pub fn topic_word(topic: usize, i: usize) -> String {
    format!("t{topic}w{i:02}")
}

/// Paragraphs drawn uniformly from disjoint per-topic vocabularies.
/// Returns the corpus and each paragraph's topic label.
pub fn topic_corpus(
    n_topics: usize,
    words_per_topic: usize,
    paragraphs_per_topic: usize,
    paragraph_len: usize,
    seed: u64,
) -> (Vec<Paragraph>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();
    let mut labels = Vec::new();
    for k in 0..n_topics {
        for j in 0..paragraphs_per_topic {
            let tokens = (0..paragraph_len)
                .map(|_| topic_word(k, rng.gen_range(0..words_per_topic)))
                .collect();
            corpus.push(Paragraph {
                doc_id: format!("topic{k}"),
                ordinal: j,
                tokens,
                source_section: None,
            });
            labels.push(k);
        }
    }
    (corpus, labels)
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
}

/// Monthly factor moments used by the simulated five-factor economy.
pub const FF5_NAMES: [&str; 5] = ["mkt_rf", "smb", "hml", "rmw", "cma"];
const FF5_MEANS: [f64; 5] = [0.006, 0.002, 0.003, 0.003, 0.003];
const FF5_SDS: [f64; 5] = [0.045, 0.03, 0.03, 0.02, 0.02];

#[derive(Debug, Clone)]
pub struct FactorEconomy {
    /// One series per factor, in [`FF5_NAMES`] order.
    pub factors: Vec<Vec<f64>>,
    pub portfolios: Vec<Vec<f64>>,
}

/// Independent normal factors and `n` portfolios with intercept `alpha`,
/// random loadings and 2% idiosyncratic noise.
pub fn ff5_economy(t: usize, n: usize, alpha: f64, seed: u64) -> FactorEconomy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: Vec<Vec<f64>> = (0..5)
        .map(|j| (0..t).map(|_| normal(&mut rng, FF5_MEANS[j], FF5_SDS[j])).collect())
        .collect();
    let portfolios = (0..n)
        .map(|_| {
            let b: Vec<f64> = (0..5)
                .map(|j| if j == 0 { rng.gen_range(0.7..1.3) } else { rng.gen_range(-0.5..0.5) })
                .collect();
            (0..t)
                .map(|s| alpha + (0..5).map(|j| b[j] * factors[j][s]).sum::<f64>() + normal(&mut rng, 0.0, 0.02))
                .collect()
        })
        .collect();
    FactorEconomy { factors, portfolios }
}

/// Factor panel `mkt` plus `candidates` in which only `candidates[planted]`
/// carries a premium; each other candidate is a zero-alpha combination of the
/// market and the planted factor plus noise.
pub fn planted_factor_panel(t: usize, candidates: &[&str], planted: usize, seed: u64) -> crate::portfolio::FactorPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mkt: Vec<f64> = (0..t).map(|_| normal(&mut rng, 0.006, 0.045)).collect();
    let a: Vec<f64> = (0..t).map(|_| normal(&mut rng, 0.008, 0.02)).collect();
    let mut names = vec!["mkt".to_string()];
    let mut columns = vec![mkt.clone()];
    for (j, c) in candidates.iter().enumerate() {
        names.push(c.to_string());
        if j == planted {
            columns.push(a.clone());
            continue;
        }
        let beta = rng.gen_range(0.3..0.9);
        let gamma = rng.gen_range(-0.2..0.2);
        columns.push(
            (0..t)
                .map(|s| beta * a[s] + gamma * mkt[s] + normal(&mut rng, 0.0, 0.02))
                .collect(),
        );
    }
    let start = crate::Month::new(1970, 1).expect("valid month");
    let months = (0..t as i64).map(|i| start.plus(i)).collect();
    crate::portfolio::FactorPanel::new(months, names, columns).expect("consistent panel")
}

#[derive(Debug, Clone)]
pub struct FirmEconomy {
    pub returns: crate::portfolio::ReturnPanel,
    pub scores: crate::portfolio::CharPanel,
    pub rf: crate::portfolio::Series,
    pub market: crate::portfolio::Series,
}

/// Firms with fixed scores in [0, 1] whose expected excess return is
/// `0.004 + slope * score`, market betas in [0.8, 1.2], lognormal caps and
/// 8% idiosyncratic volatility. Months start at 1970-01.
pub fn score_economy(n_firms: usize, t: usize, slope: f64, seed: u64) -> FirmEconomy {
    use crate::portfolio::{CharPanel, ReturnPanel, Series};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = crate::Month::new(1970, 1).expect("valid month");
    let months: Vec<crate::Month> = (0..t as i64).map(|i| start.plus(i)).collect();
    let firms: Vec<(f64, f64, f64)> = (0..n_firms)
        .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.8..1.2), normal(&mut rng, 0.0, 1.0).exp()))
        .collect();
    let rf = 0.002;
    let mut returns = ReturnPanel::new();
    let mut scores = CharPanel::new();
    let mut market = Vec::with_capacity(t);
    for &m in &months {
        let shock = normal(&mut rng, 0.0, 0.04);
        market.push(0.005 + shock);
        for (i, &(s, beta, cap)) in firms.iter().enumerate() {
            let r = rf + 0.004 + slope * s + beta * shock + normal(&mut rng, 0.0, 0.08);
            returns
                .insert(i as u64 + 1, m, Some(r.max(-0.95)), Some(cap))
                .expect("valid observation");
            scores.insert(i as u64 + 1, m, s);
        }
    }
    FirmEconomy {
        returns,
        scores,
        rf: Series::new(months.clone(), vec![rf; t]).expect("sorted months"),
        market: Series::new(months, market).expect("sorted months"),
    }
}

#[derive(Debug, Clone)]
pub struct FmbEconomy {
    /// `returns[t][i]`
    pub returns: Vec<Vec<f64>>,
    /// Portfolio score characteristic, `score[t][i]`.
    pub score: Vec<Vec<f64>>,
    /// Portfolio market beta exposure, `beta[t][i]`, carrying no premium.
    pub beta: Vec<Vec<f64>>,
}

fn zscores(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    x.iter().map(|v| (v - m) / sd).collect()
}

/// Cross-sections of `n` portfolios where month-t returns load `premium`
/// on the standardized month-(t-1) score, plus normal noise.
pub fn fmb_economy(t: usize, n: usize, premium: f64, noise_sd: f64, seed: u64) -> FmbEconomy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut score: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut beta = Vec::with_capacity(t);
    let mut returns = Vec::with_capacity(t);
    for s in 0..t {
        let sc: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 + normal(&mut rng, 0.0, 0.05)).collect();
        let be: Vec<f64> = (0..n).map(|_| normal(&mut rng, 1.0, 0.2)).collect();
        let r: Vec<f64> = if s == 0 {
            (0..n).map(|_| normal(&mut rng, 0.0, noise_sd)).collect()
        } else {
            let z = zscores(&score[s - 1]);
            (0..n).map(|i| 0.005 + premium * z[i] + normal(&mut rng, 0.0, noise_sd)).collect()
        };
        score.push(sc);
        beta.push(be);
        returns.push(r);
    }
    FmbEconomy { returns, score, beta }
}
