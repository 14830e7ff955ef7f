mod common;

use common::oracle;
use cyberrisk_core::apt::{
    alpha_regression, cumulative_factor_prob, expanding_scan, fama_macbeth, grs_test, log_marginal_likelihood,
    max_sharpe_sq, model_scan, newey_west_cov, nw_lag_rule, ols, prior_sensitivity, q_scalar, rolling_betas,
    AptError, BayesParams, CovKind, Exposure, ModelPosterior, ScanResult,
};
use cyberrisk_core::linalg;
use cyberrisk_core::portfolio::{FactorPanel, Series};
use cyberrisk_core::synth::{ff5_economy, fmb_economy, planted_factor_panel, FF5_NAMES};
use cyberrisk_core::Month;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const CANDIDATES: [&str; 6] = ["smb", "hml", "mom", "rmw", "cma", "cyber"];

fn months(t: usize) -> Vec<Month> {
    let start = Month::new(1970, 1).unwrap();
    (0..t as i64).map(|i| start.plus(i)).collect()
}

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn ff5_panel(factors: &[Vec<f64>]) -> FactorPanel {
    FactorPanel::new(
        months(factors[0].len()),
        FF5_NAMES.iter().map(|s| s.to_string()).collect(),
        factors.to_vec(),
    )
    .unwrap()
}

#[test]
fn newey_west_zero_lag_is_white() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = 80;
    let x1 = gauss(&mut rng, t);
    let x2 = gauss(&mut rng, t);
    let y: Vec<f64> = (0..t)
        .map(|s| 0.5 + x1[s] - 0.3 * x2[s] + (1.0 + x1[s].abs()) * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let xd = oracle::design(&[&x1, &x2], true);
    let (_, e) = oracle::ols(&y, &xd);
    let xtx_inv = oracle::inverse(&oracle::matmul(&oracle::transpose(&xd), &xd));
    let meat: oracle::Mat = (0..3)
        .map(|i| (0..3).map(|j| (0..t).map(|s| e[s] * e[s] * xd[s][i] * xd[s][j]).sum()).collect())
        .collect();
    let white = oracle::matmul(&oracle::matmul(&xtx_inv, &meat), &xtx_inv);

    let x = linalg::with_intercept(&linalg::columns(&[&x1, &x2]));
    let fit = ols(&y, &x, CovKind::NeweyWest(0)).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!(rel_close(fit.covariance[(i, j)], white[i][j], 1e-10));
        }
    }
}

#[test]
fn bartlett_three_observation_case() {
    // Gamma_0 = 6/3, Gamma_1 = (-1 - 2)/3, weight 1/2: 2 + 2 * 0.5 * (-1) = 1.
    let u = DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 2.0]);
    assert!((newey_west_cov(&u, 1)[(0, 0)] - 1.0).abs() < 1e-12);
}

#[test]
fn newey_west_variance_of_iid_mean() {
    let t = 240;
    let lag = nw_lag_rule(t);
    let (mut nw, mut naive) = (0.0, 0.0);
    for seed in 0..1000 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gauss(&mut rng, t);
        let m = oracle::mean(&x);
        let u = DMatrix::from_iterator(t, 1, x.iter().map(|v| v - m));
        nw += newey_west_cov(&u, lag)[(0, 0)] / t as f64;
        naive += x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (t - 1) as f64 / t as f64;
    }
    let ratio = nw / naive;
    assert!((0.9..=1.1).contains(&ratio), "ratio {ratio}");
}

#[test]
fn alpha_regression_trivial_cases() {
    let eco = ff5_economy(120, 1, 0.0, 5);
    let panel = ff5_panel(&eco.factors);
    let mkt = panel.series("mkt_rf").unwrap();
    let fit = alpha_regression(&mkt, &panel, &["mkt_rf"], None).unwrap();
    assert!(fit.coefficients[0].abs() < 1e-12 && (fit.coefficients[1] - 1.0).abs() < 1e-12);
    let shifted = Series::new(mkt.months.clone(), mkt.values.iter().map(|v| v + 0.004).collect()).unwrap();
    let fit = alpha_regression(&shifted, &panel, &["mkt_rf"], None).unwrap();
    assert!((fit.coefficients[0] - 0.004).abs() < 1e-12);
    let dup = panel.clone().with_column("dup", &mkt).unwrap();
    assert!(matches!(
        alpha_regression(&mkt, &dup, &["mkt_rf", "dup"], None),
        Err(AptError::RankDeficient)
    ));
    let late = Series::new(months(130)[10..].to_vec(), vec![0.0; 120]).unwrap();
    assert!(matches!(alpha_regression(&late, &panel, &["mkt_rf"], None), Err(AptError::DateMismatch)));
}

#[test]
fn planted_alpha_coverage() {
    let alpha = 0.003;
    let sims = 1000;
    let covered = (0..sims)
        .filter(|&seed| {
            let eco = ff5_economy(600, 1, alpha, 10_000 + seed);
            let panel = ff5_panel(&eco.factors);
            let y = Series::new(panel.months.clone(), eco.portfolios[0].clone()).unwrap();
            let fit = alpha_regression(&y, &panel, &FF5_NAMES, None).unwrap();
            (fit.coefficients[0] - alpha).abs() <= 2.0 * fit.std_errors[0]
        })
        .count();
    let rate = covered as f64 / sims as f64;
    assert!(rate >= 0.93, "coverage {rate}");
}

#[test]
fn rolling_beta_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let f = gauss(&mut rng, 240);
    let betas = rolling_betas(&f, &[&f], 24).unwrap();
    assert_eq!(betas.len(), 240 - 24 + 1);
    assert!(betas.iter().all(|b| (b[0] - 1.0).abs() < 1e-10));

    let mut total = 0.0;
    let mut count = 0;
    for _ in 0..100 {
        let a = gauss(&mut rng, 240);
        let g = gauss(&mut rng, 240);
        for b in rolling_betas(&a, &[&g], 24).unwrap() {
            total += b[0];
            count += 1;
        }
    }
    let mean = total / count as f64;
    assert!(mean.abs() < 0.05, "mean beta {mean}");
    let a = gauss(&mut rng, 240);

    assert!(matches!(
        rolling_betas(&a[..23], &[&f[..23]], 24),
        Err(AptError::InsufficientHistory { .. })
    ));
}

fn fmb_exposures(eco: &cyberrisk_core::synth::FmbEconomy) -> Vec<Exposure> {
    vec![
        Exposure {
            name: "beta".into(),
            values: eco.beta.clone(),
            standardize: true,
        },
        Exposure {
            name: "score".into(),
            values: eco.score.clone(),
            standardize: true,
        },
    ]
}

#[test]
fn fama_macbeth_recovers_planted_premium() {
    let eco = fmb_economy(600, 20, 0.002, 0.03, 42);
    let res = fama_macbeth(&eco.returns, &fmb_exposures(&eco), None).unwrap();
    assert_eq!(res.names, ["const", "beta", "score"]);
    let g = res.gamma_means[2];
    assert!((0.001..=0.003).contains(&g), "premium {g}");
    assert!(res.nw_t_stats[2] > 2.0, "t {}", res.nw_t_stats[2]);
    assert_eq!(res.gammas.len(), 599);
}

#[test]
fn fama_macbeth_noise_size() {
    let sims = 200;
    let quiet = (0..sims)
        .filter(|&seed| {
            let eco = fmb_economy(600, 20, 0.0, 0.03, 500 + seed);
            let res = fama_macbeth(&eco.returns, &fmb_exposures(&eco), None).unwrap();
            res.nw_t_stats[2].abs() < 2.0
        })
        .count();
    assert!(quiet as f64 / sims as f64 >= 0.9, "{quiet}/{sims}");
}

#[test]
fn fama_macbeth_exact_economy_and_errors() {
    // Returns exactly linear in the lagged raw exposure.
    let eco = fmb_economy(50, 10, 0.0, 0.0, 1);
    let returns: Vec<Vec<f64>> = (0..50)
        .map(|t| {
            if t == 0 {
                vec![0.0; 10]
            } else {
                eco.score[t - 1].iter().map(|s| 0.01 + 0.004 * s).collect()
            }
        })
        .collect();
    let ex = vec![Exposure {
        name: "score".into(),
        values: eco.score.clone(),
        standardize: false,
    }];
    let res = fama_macbeth(&returns, &ex, Some(2)).unwrap();
    assert!((res.gamma_means[0] - 0.01).abs() < 1e-12);
    assert!((res.gamma_means[1] - 0.004).abs() < 1e-12);
    assert!(res.mape < 1e-12);

    let small: Vec<Vec<f64>> = returns.iter().map(|r| r[..3].to_vec()).collect();
    let two = vec![
        Exposure {
            name: "a".into(),
            values: eco.score.iter().map(|r| r[..3].to_vec()).collect(),
            standardize: false,
        },
        Exposure {
            name: "b".into(),
            values: eco.beta.iter().map(|r| r[..3].to_vec()).collect(),
            standardize: false,
        },
    ];
    assert!(matches!(
        fama_macbeth(&small, &two, None),
        Err(AptError::InsufficientCrossSection { n: 3, k: 2 })
    ));
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

#[test]
fn grs_matches_dense_oracle() {
    for (seed, t, n) in [(1, 40, 3), (2, 60, 6), (3, 25, 2)] {
        let eco = ff5_economy(t, n, 0.002, seed);
        let p = refs(&eco.portfolios);
        let f = refs(&eco.factors[..3]);
        let res = grs_test(&p, &f).unwrap();
        let want = oracle::grs(&p, &f);
        assert!(rel_close(res.statistic, want, 1e-10), "{} vs {want}", res.statistic);
        assert!((0.0..=1.0).contains(&res.p_value));
    }
}

#[test]
fn grs_single_portfolio_is_squared_t() {
    let eco = ff5_economy(90, 1, 0.002, 8);
    let f = refs(&eco.factors);
    let res = grs_test(&[&eco.portfolios[0]], &f).unwrap();
    let x = linalg::with_intercept(&linalg::columns(&f));
    let fit = ols(&eco.portfolios[0], &x, CovKind::Classical).unwrap();
    assert!(rel_close(res.statistic, fit.t_stats[0].powi(2), 1e-10));
}

#[test]
fn grs_invariances() {
    let eco = ff5_economy(80, 4, 0.001, 12);
    let f = refs(&eco.factors);
    let base = grs_test(&refs(&eco.portfolios), &f).unwrap().statistic;
    let mut rev = eco.portfolios.clone();
    rev.reverse();
    assert!(rel_close(grs_test(&refs(&rev), &f).unwrap().statistic, base, 1e-10));
    let scaled: Vec<Vec<f64>> = eco
        .portfolios
        .iter()
        .enumerate()
        .map(|(i, p)| p.iter().map(|v| v * (i + 1) as f64 * 3.0).collect())
        .collect();
    assert!(rel_close(grs_test(&refs(&scaled), &f).unwrap().statistic, base, 1e-10));
}

#[test]
fn grs_zero_alpha_exact_combinations() {
    let eco = ff5_economy(60, 1, 0.0, 4);
    let f = &eco.factors;
    let p: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..60).map(|s| f[0][s] + 0.5 * i as f64 * f[1][s] - 0.2 * f[2][s]).collect())
        .collect();
    let res = grs_test(&refs(&p), &refs(f)).unwrap();
    assert_eq!(res.statistic, 0.0);
    assert_eq!(res.p_value, 1.0);
}

#[test]
fn grs_errors() {
    let eco = ff5_economy(8, 3, 0.0, 4);
    assert!(matches!(
        grs_test(&refs(&eco.portfolios), &refs(&eco.factors)),
        Err(AptError::TooShortSample { t: 8, n: 3, k: 5 })
    ));
    let eco = ff5_economy(50, 3, 0.0, 4);
    let f = [eco.factors[0].as_slice(), eco.factors[0].as_slice()];
    assert!(matches!(grs_test(&refs(&eco.portfolios), &f), Err(AptError::SingularCovariance)));
}

#[test]
fn grs_size_under_zero_alpha() {
    let sims = 2000;
    let rejections = (0..sims)
        .filter(|&seed| {
            let eco = ff5_economy(240, 10, 0.0, 100_000 + seed);
            grs_test(&refs(&eco.portfolios), &refs(&eco.factors)).unwrap().p_value < 0.05
        })
        .count();
    let rate = rejections as f64 / sims as f64;
    assert!((0.03..=0.07).contains(&rate), "size {rate}");
}

#[test]
fn q_scalar_cases() {
    let q = q_scalar(10.0, 0.04, 0.09, 100, 2, 5).unwrap();
    let want = oracle::q_direct(10.0, 0.04, 0.09, 100, 2, 5);
    assert!(rel_close(q, want, 1e-12), "{q} vs {want}");
    // a = 1.04/100, k = 0.01: W = 0 leaves (1 + k/a)^(-N/2).
    let q0 = q_scalar(0.0, 0.04, 0.09, 100, 2, 5).unwrap();
    assert!(rel_close(q0, (1.0f64 + 0.01 / 0.0104).powf(-2.5), 1e-12));
    assert!(matches!(q_scalar(1.0, 0.09, 0.09, 100, 2, 5), Err(AptError::NonPositiveK { .. })));
}

#[test]
fn marginal_likelihood_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let t = 60;
    let y: Vec<f64> = (0..t).map(|_| 0.01 + 0.04 * rng.sample::<f64, _>(StandardNormal)).collect();
    let x: Vec<f64> = (0..t)
        .map(|s| 0.003 + 0.7 * y[s] + 0.02 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let sh_max = 0.3;

    let tf = t as f64;
    let my = oracle::mean(&y);
    let mx = oracle::mean(&x);
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = y.iter().zip(&x).map(|(a, b)| (a - my) * (b - mx)).sum();
    let slope = sxy / syy;
    let alpha = mx - slope * my;
    let ssr: f64 = y.iter().zip(&x).map(|(a, b)| (b - alpha - slope * a).powi(2)).sum();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let xy: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
    let ssr_r: f64 = y.iter().zip(&x).map(|(a, b)| (b - xy / yy * a).powi(2)).sum();
    let sh_y = my * my / (syy / tf);
    let w = tf * alpha * alpha / (ssr / tf) / (1.0 + sh_y);
    let q = oracle::q_direct(w, sh_y, sh_max, t, 1, 1);
    let want_u = -0.5 * yy.ln() - (tf - 1.0) / 2.0 * ssr.ln() + q.ln();
    let want_r = -0.5 * yy.ln() - (tf - 1.0) / 2.0 * ssr_r.ln();

    let ym = DMatrix::from_column_slice(t, 1, &y);
    let xm = DMatrix::from_column_slice(t, 1, &x);
    let u = log_marginal_likelihood(&ym, &xm, false, sh_max).unwrap();
    let r = log_marginal_likelihood(&ym, &xm, true, sh_max).unwrap();
    assert!(rel_close(u, want_u, 1e-10), "{u} vs {want_u}");
    assert!(rel_close(r, want_r, 1e-10), "{r} vs {want_r}");
}

#[test]
fn marginal_likelihood_spanned_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = 80;
    let y1: Vec<f64> = (0..t).map(|_| 0.01 + 0.04 * rng.sample::<f64, _>(StandardNormal)).collect();
    let y2: Vec<f64> = (0..t).map(|_| 0.004 + 0.03 * rng.sample::<f64, _>(StandardNormal)).collect();
    let d = oracle::design(&[&y1, &y2], true);
    // Noise orthogonal to the intercept and both regressors.
    let x: Vec<Vec<f64>> = (0..2)
        .map(|j| {
            let raw = gauss(&mut rng, t);
            let (_, e) = oracle::ols(&raw, &d);
            (0..t).map(|s| 0.5 * y1[s] - 0.2 * j as f64 * y2[s] + 0.01 * e[s]).collect()
        })
        .collect();
    let ym = linalg::columns(&[&y1, &y2]);
    let xm = linalg::columns(&refs(&x));
    let sh_y = max_sharpe_sq(&[&y1, &y2]).unwrap();
    let sh_max = sh_y + 0.05;
    let u = log_marginal_likelihood(&ym, &xm, false, sh_max).unwrap();
    let r = log_marginal_likelihood(&ym, &xm, true, sh_max).unwrap();
    let log_q = oracle::q_direct(0.0, sh_y, sh_max, t, 2, 2).ln();
    assert!((u - r - log_q).abs() < 1e-8, "{} vs {log_q}", u - r);

    let col = linalg::columns(&[&y1, &y1]);
    assert!(matches!(
        log_marginal_likelihood(&col, &xm, true, sh_max),
        Err(AptError::SingularCrossProduct)
    ));
}

#[test]
fn max_sharpe_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let a: Vec<f64> = (0..20_000).map(|_| 0.3 + rng.sample::<f64, _>(StandardNormal)).collect();
    let b: Vec<f64> = (0..20_000).map(|_| 0.2 + rng.sample::<f64, _>(StandardNormal)).collect();
    let single = max_sharpe_sq(&[&a]).unwrap();
    let var = oracle::cov_ml(&[&a])[0][0];
    assert!(rel_close(single, oracle::mean(&a).powi(2) / var, 1e-12));
    let both = max_sharpe_sq(&[&a, &b]).unwrap();
    let sum = single + max_sharpe_sq(&[&b]).unwrap();
    assert!((both / sum - 1.0).abs() < 0.1);
    assert!(matches!(max_sharpe_sq(&[&a, &a]), Err(AptError::SingularCovariance)));
}

fn params(multiple: f64) -> BayesParams {
    BayesParams {
        prior_multiple: multiple,
        market: "mkt".into(),
        candidates: CANDIDATES.iter().map(|s| s.to_string()).collect(),
    }
}

fn top_candidate(scan: &ScanResult, candidates: &[String]) -> String {
    cumulative_factor_prob(scan, candidates)
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

#[test]
fn scan_enumerates_and_normalizes() {
    let panel = planted_factor_panel(600, &CANDIDATES, 5, 1);
    let scan = model_scan(&panel, &params(1.5)).unwrap();
    assert_eq!(scan.models.len(), 62);
    assert!(scan.failures.is_empty());
    let total: f64 = scan.models.iter().map(|m| m.posterior).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let mut keys: Vec<&str> = scan.models.iter().map(|m| m.key.as_str()).collect();
    keys.dedup();
    assert_eq!(keys.len(), 62);
}

#[test]
fn scan_finds_planted_factor() {
    let p = params(1.5);
    let seeds = 20;
    let wins = (0..seeds)
        .filter(|&seed| {
            let planted = (seed % 6) as usize;
            let panel = planted_factor_panel(600, &CANDIDATES, planted, 300 + seed);
            let scan = model_scan(&panel, &p).unwrap();
            top_candidate(&scan, &p.candidates) == CANDIDATES[planted]
        })
        .count();
    assert!(wins as f64 / seeds as f64 >= 0.9, "{wins}/{seeds}");
}

#[test]
fn scan_is_order_invariant() {
    let panel = planted_factor_panel(300, &CANDIDATES, 2, 8);
    let a = model_scan(&panel, &params(2.0)).unwrap();
    let mut p = params(2.0);
    p.candidates.reverse();
    let b = model_scan(&panel, &p).unwrap();
    for m in &a.models {
        let other = b.get(&m.key).unwrap();
        assert!((m.posterior - other.posterior).abs() < 1e-12);
    }
}

#[test]
fn expanding_final_month_equals_full_scan() {
    let panel = planted_factor_panel(120, &CANDIDATES, 0, 4);
    let p = params(1.5);
    let full = model_scan(&panel, &p).unwrap();
    let last = *panel.months.last().unwrap();
    let grid = [panel.months[59], panel.months[89], last];
    let scans = expanding_scan(&panel, &p, panel.months[0], &grid).unwrap();
    assert_eq!(scans.len(), 3);
    assert_eq!(scans[2].0, last);
    assert_eq!(scans[2].1, full);
    assert_eq!(scans[0].1.t, 60);
    for (_, s) in &scans {
        assert!((s.models.iter().map(|m| m.posterior).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn prior_sensitivity_is_stable_on_planted_economy() {
    let panel = planted_factor_panel(600, &CANDIDATES, 5, 77);
    let multiples = [1.25, 1.5, 2.0, 3.0];
    let p = params(1.5);
    let table = prior_sensitivity(&panel, &p, &multiples).unwrap();
    assert!(table.rows.iter().all(|(_, v)| v.len() == 4));
    assert!(table.rows.len() >= 5);
    let winners: Vec<String> = multiples
        .iter()
        .map(|&m| model_scan(&panel, &params(m)).unwrap().ranked()[0].key.clone())
        .collect();
    assert!(winners.iter().all(|w| w == &winners[0]), "{winners:?}");
    assert!(matches!(model_scan(&panel, &params(1.0)), Err(AptError::NonPositiveK { .. })));
}

#[test]
fn scan_rejects_short_panels_and_survives_near_collinearity() {
    let panel = planted_factor_panel(30, &CANDIDATES, 0, 4);
    assert!(matches!(
        model_scan(&panel, &params(1.5)),
        Err(AptError::InsufficientHistory { need: 36, got: 30 })
    ));

    let base = planted_factor_panel(240, &CANDIDATES, 0, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let smb = base.column("smb").unwrap().to_vec();
    let twin: Vec<f64> = smb.iter().map(|v| v + 1e-4 * rng.sample::<f64, _>(StandardNormal)).collect();
    let panel = base
        .with_column("hml", &Series::new(months(240), twin).unwrap())
        .unwrap();
    let scan = model_scan(&panel, &params(1.5)).unwrap();
    assert!(scan.models.iter().all(|m| m.posterior.is_finite() && m.log_ml.is_finite()));
    assert!((scan.models.iter().map(|m| m.posterior).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn cumulative_probability_cases() {
    let model = |key: &str, factors: &[&str], posterior: f64| ModelPosterior {
        key: key.into(),
        factors: factors.iter().map(|s| s.to_string()).collect(),
        log_ml_u: 0.0,
        log_ml_r: 0.0,
        log_ml: 0.0,
        posterior,
    };
    let scan = ScanResult {
        models: vec![model("a+b+mkt", &["a", "b"], 0.7), model("b+mkt", &["b"], 0.3)],
        failures: vec![],
        t: 60,
    };
    let cum = cumulative_factor_prob(&scan, &["a".into(), "b".into()]);
    assert_eq!(cum, vec![("a".to_string(), 0.7), ("b".to_string(), 1.0)]);
}
