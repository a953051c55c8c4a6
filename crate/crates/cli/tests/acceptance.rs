//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line, then asserts.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stackcast::cv::{splits, CvPreset, CvSpec};
use stackcast::evaluation::{mae, mape, r_squared, rmse};
use stackcast::feature_select::{run_boruta, BorutaConfig, Decision};
use stackcast::features::{build_feature_matrix, reference_candidate_specs, FeatureMatrix};
use stackcast::indicators::{self, RollingStat, Windowed};
use stackcast::learners::{
    fit_elastic_net, fit_forest, fit_svr, ElasticNetParams, ForestParams, LearnerSpec, SvrParams,
};
use stackcast::market_data::{load_csv, split, CsvSchema, OhlcvRow, OhlcvSeries, SplitSpec};
use stackcast::stacking::{fit_stack, out_of_fold, StackConfig};

fn report(id: u32, title: &str, ok: bool, detail: &str) {
    println!("{} criterion {id} ({title}): {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} ({title}) failed: {detail}");
}

fn matrix(rows: Vec<Vec<f64>>, target: Vec<f64>) -> FeatureMatrix {
    FeatureMatrix::from_xy(rows, target).unwrap()
}

// ---------------------------------------------------------------- indicators

fn random_ohlcv(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut close = Vec::with_capacity(n);
    let (mut high, mut low, mut vol) = (Vec::new(), Vec::new(), Vec::new());
    let mut c: f64 = 100.0;
    for _ in 0..n {
        c *= (rng.gen_range(-0.04..0.04f64)).exp();
        let h = c * (1.0 + rng.gen_range(0.0..0.03));
        let l = c * (1.0 - rng.gen_range(0.0..0.03));
        close.push(c);
        high.push(h);
        low.push(l);
        vol.push(rng.gen_range(1e3..1e6));
    }
    (high, low, close, vol)
}

fn naive_ema(xs: &[f64], w: usize) -> Vec<Option<f64>> {
    let a = 2.0 / (w as f64 + 1.0);
    let mut out = vec![None; xs.len()];
    if xs.len() < w {
        return out;
    }
    let mut prev = xs[..w].iter().sum::<f64>() / w as f64;
    out[w - 1] = Some(prev);
    for d in w..xs.len() {
        prev = a * xs[d] + (1.0 - a) * prev;
        out[d] = Some(prev);
    }
    out
}

fn per_window(n: usize, w: usize, f: impl Fn(usize) -> f64) -> Vec<Option<f64>> {
    (0..n).map(|d| (d + 1 >= w).then(|| f(d))).collect()
}

/// Largest relative difference; `None` if the defined ranges differ.
fn compare(fast: &Windowed, naive: &[Option<f64>]) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for (d, slow) in naive.iter().enumerate() {
        match (fast.get(d), slow) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs() / b.abs().max(1e-12)),
            (None, None) => {}
            _ => return None,
        }
    }
    Some(worst)
}

#[test]
fn criterion_1_indicator_oracles() {
    let start = Instant::now();
    let n = 1000;
    let (h, l, c, v) = random_ohlcv(1, n);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut check = |name: &str, fast: Windowed, naive: Vec<Option<f64>>| match compare(&fast, &naive) {
        Some(e) if e <= 1e-9 => worst = worst.max(e),
        Some(e) => failures.push(format!("{name}: rel err {e:e}")),
        None => failures.push(format!("{name}: defined range differs")),
    };

    for w in [5, 13, 50] {
        check("SMA", indicators::sma(&c, w).unwrap(), per_window(n, w, |d| c[d + 1 - w..=d].iter().sum::<f64>() / w as f64));
        check("EMA", indicators::ema(&c, w).unwrap(), naive_ema(&c, w));
        let norm = (w * (w + 1)) as f64 / 2.0;
        check(
            "WMA",
            indicators::wma(&c, w).unwrap(),
            per_window(n, w, |d| (0..w).map(|k| (w - k) as f64 * c[d - k]).sum::<f64>() / norm),
        );
    }

    let tr: Vec<f64> = (1..n)
        .map(|d| (h[d] - l[d]).max((h[d] - c[d - 1]).abs()).max((l[d] - c[d - 1]).abs()))
        .collect();
    let mut atr_naive = vec![None];
    atr_naive.extend(naive_ema(&tr, 14));
    check("ATR", indicators::atr(&h, &l, &c, 14).unwrap(), atr_naive);

    check(
        "AD",
        indicators::ad_line(&h, &l, &c, &v).unwrap(),
        (0..n)
            .map(|d| {
                Some(
                    (0..=d)
                        .map(|k| ((c[k] - l[k]) - (h[k] - c[k])) / (h[k] - l[k]) * v[k])
                        .sum::<f64>(),
                )
            })
            .collect(),
    );

    let w = 20;
    check(
        "CCI",
        indicators::cci(&h, &l, &c, w).unwrap(),
        per_window(n, w, |d| {
            let tp: Vec<f64> = (d + 1 - w..=d).map(|k| h[k] + l[k] + c[k]).collect();
            let m = tp.iter().sum::<f64>() / w as f64;
            let mad = tp.iter().map(|t| (t - m).abs()).sum::<f64>() / w as f64;
            (tp[w - 1] - m) / (0.015 * mad)
        }),
    );

    let lag = |k: usize, f: &dyn Fn(usize) -> f64| -> Vec<Option<f64>> { (0..n).map(|d| (d >= k).then(|| f(d))).collect() };
    check("ROC", indicators::roc(&c, 10).unwrap(), lag(10, &|d| (c[d] - c[d - 10]) / c[d - 10]));
    check("MOM", indicators::mom(&c, 10).unwrap(), lag(10, &|d| c[d] - c[d - 10]));

    let macd = indicators::macd(&c).unwrap();
    let (e12, e26) = (naive_ema(&c, 12), naive_ema(&c, 26));
    let line: Vec<Option<f64>> = (0..n).map(|d| Some(e12[d]? - e26[d]?)).collect();
    let defined: Vec<f64> = line.iter().flatten().copied().collect();
    let mut signal = vec![None; n - defined.len()];
    signal.extend(naive_ema(&defined, 9));
    let hist: Vec<Option<f64>> = (0..n).map(|d| Some(line[d]? - signal[d]?)).collect();
    check("MACD line", macd.line, line);
    check("MACD signal", macd.signal, signal);
    check("MACD histogram", macd.histogram, hist);

    let bands = indicators::bollinger(&c, w, 2.0).unwrap();
    let sd = |d: usize| {
        let win = &c[d + 1 - w..=d];
        let m = win.iter().sum::<f64>() / w as f64;
        (win.iter().map(|x| (x - m).powi(2)).sum::<f64>() / w as f64).sqrt()
    };
    let mid = |d: usize| c[d + 1 - w..=d].iter().sum::<f64>() / w as f64;
    check("BBands up", bands.up, per_window(n, w, |d| mid(d) + 2.0 * sd(d)));
    check("BBands down", bands.down, per_window(n, w, |d| mid(d) - 2.0 * sd(d)));
    check("BBands mid", bands.mid, per_window(n, w, mid));

    let k = 14;
    check(
        "stochOSC",
        indicators::stoch_osc(&h, &l, &c, k).unwrap(),
        per_window(n, k, |d| {
            let lo = l[d + 1 - k..=d].iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = h[d + 1 - k..=d].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (c[d] - lo) / (hi - lo)
        }),
    );

    check("meanMW", indicators::rolling_stat(&c, w, RollingStat::Mean).unwrap(), per_window(n, w, mid));
    check(
        "medianMW",
        indicators::rolling_stat(&c, w, RollingStat::Median).unwrap(),
        per_window(n, w, |d| {
            let mut win = c[d + 1 - w..=d].to_vec();
            win.sort_by(f64::total_cmp);
            (win[w / 2 - 1] + win[w / 2]) / 2.0
        }),
    );
    check(
        "Volatility",
        indicators::rolling_stat(&c, w, RollingStat::Volatility).unwrap(),
        (0..n)
            .map(|d| {
                (d >= w).then(|| {
                    let r: Vec<f64> = (d + 1 - w..=d).map(|k| (c[k] / c[k - 1]).ln()).collect();
                    let m = r.iter().sum::<f64>() / w as f64;
                    (r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (w - 1) as f64).sqrt()
                })
            })
            .collect(),
    );

    let elapsed = start.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(10);
    let detail = if failures.is_empty() {
        format!("all indicator families within 1e-9 (worst {worst:.1e}) in {elapsed:.2?}")
    } else {
        failures.join("; ")
    };
    report(1, "indicator oracles", ok, &detail);
}

// --------------------------------------------------------------- elastic net

fn centered(m: &FeatureMatrix) -> (DMatrix<f64>, DVector<f64>, Vec<f64>, f64) {
    let (n, p) = (m.n_rows(), m.n_features());
    let means: Vec<f64> = (0..p).map(|j| m.column(j).iter().sum::<f64>() / n as f64).collect();
    let ym = m.target.iter().sum::<f64>() / n as f64;
    let x = DMatrix::from_fn(n, p, |i, j| m.rows[i][j] - means[j]);
    let y = DVector::from_fn(n, |i, _| m.target[i] - ym);
    (x, y, means, ym)
}

fn ridge_oracle(m: &FeatureMatrix, lambda: f64, standardize: bool) -> Vec<f64> {
    let (x, y, _, _) = centered(m);
    let n = m.n_rows() as f64;
    let p = m.n_features();
    let scales: Vec<f64> = (0..p)
        .map(|j| if standardize { (x.column(j).norm_squared() / n).sqrt() } else { 1.0 })
        .collect();
    let z = DMatrix::from_fn(x.nrows(), p, |i, j| x[(i, j)] / scales[j]);
    let a = z.transpose() * &z / n + DMatrix::identity(p, p) * lambda;
    let b = a.lu().solve(&(z.transpose() * y / n)).unwrap();
    b.iter().zip(&scales).map(|(b, s)| b / s).collect()
}

fn soft(z: f64, g: f64) -> f64 {
    z.signum() * (z.abs() - g).max(0.0)
}

#[test]
fn criterion_2_elastic_net_closed_forms() {
    let mut worst_ols: f64 = 0.0;
    let mut worst_ridge: f64 = 0.0;
    let mut worst_lasso: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let beta: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let target: Vec<f64> = rows
            .iter()
            .map(|r| 0.5 + r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-1.0..1.0))
            .collect();
        let m = matrix(rows, target);

        // OLS through the normal equations with an intercept column.
        let xa = DMatrix::from_fn(50, 6, |i, j| if j == 0 { 1.0 } else { m.rows[i][j - 1] });
        let ya = DVector::from_vec(m.target.clone());
        let ols = (xa.transpose() * &xa).lu().solve(&(xa.transpose() * ya)).unwrap();
        let fit = fit_elastic_net(&m, &ElasticNetParams { lambda: 0.0, tol: 1e-14, max_iter: 100_000, ..Default::default() }).unwrap();
        worst_ols = worst_ols.max((fit.intercept - ols[0]).abs());
        for j in 0..5 {
            worst_ols = worst_ols.max((fit.coefficients[j] - ols[j + 1]).abs());
        }

        for standardize in [false, true] {
            let lambda = rng.gen_range(0.05..2.0);
            let p = ElasticNetParams { alpha: 0.0, lambda, standardize, tol: 1e-14, ..Default::default() };
            let fit = fit_elastic_net(&m, &p).unwrap();
            for (a, b) in fit.coefficients.iter().zip(ridge_oracle(&m, lambda, standardize)) {
                worst_ridge = worst_ridge.max((a - b).abs());
            }
        }

        // Single feature: soft-threshold of the covariance over the variance.
        let one = matrix(m.rows.iter().map(|r| vec![r[0]]).collect(), m.target.clone());
        let (x, y, _, _) = centered(&one);
        let cov = x.column(0).dot(&y) / 50.0;
        let var = x.column(0).norm_squared() / 50.0;
        for standardize in [false, true] {
            let lambda = rng.gen_range(0.0..cov.abs() * 1.2);
            let p = ElasticNetParams { alpha: 1.0, lambda, standardize, tol: 1e-15, ..Default::default() };
            let fit = fit_elastic_net(&one, &p).unwrap();
            let expected = if standardize {
                let s = var.sqrt();
                soft(cov / s, lambda) / s
            } else {
                soft(cov, lambda) / var
            };
            worst_lasso = worst_lasso.max((fit.coefficients[0] - expected).abs());
        }
    }
    let ok = worst_ols <= 1e-6 && worst_ridge <= 1e-6 && worst_lasso <= 1e-8;
    report(
        2,
        "elastic net closed forms",
        ok,
        &format!("20 problems 50x5: OLS err {worst_ols:.1e} (tol 1e-6), ridge err {worst_ridge:.1e} (tol 1e-6), lasso err {worst_lasso:.1e} (tol 1e-8)"),
    );
}

// ----------------------------------------------------------------------- SVR

fn svr_primal(v: f64, b: f64, x: &[f64], y: &[f64], c: f64, eps: f64) -> f64 {
    0.5 * v * v + c * x.iter().zip(y).map(|(xi, yi)| ((yi - v * xi - b).abs() - eps).max(0.0)).sum::<f64>()
}

/// Exact minimum over the intercept: the loss is piecewise linear and convex
/// in `b`, so a breakpoint attains it.
fn best_intercept(v: f64, x: &[f64], y: &[f64], c: f64, eps: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        for b in [yi - v * xi - eps, yi - v * xi + eps] {
            let o = svr_primal(v, b, x, y, c, eps);
            if o < best.0 {
                best = (o, b);
            }
        }
    }
    best
}

/// Golden-section search over the slope of the convex profile objective.
fn svr_oracle(x: &[f64], y: &[f64], c: f64, eps: f64) -> f64 {
    let f = |v: f64| best_intercept(v, x, y, c, eps).0;
    let bound = (2.0 * f(0.0)).sqrt() + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    f(0.5 * (lo + hi))
}

#[test]
fn criterion_3_svr_against_brute_force() {
    let mut worst_obj: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let slope = rng.gen_range(-2.0..2.0);
        let y: Vec<f64> = x.iter().map(|xi| slope * xi + 0.3 + rng.gen_range(-0.8..0.8)).collect();
        let cost = rng.gen_range(0.1..3.0);
        let eps = rng.gen_range(0.0..0.4);
        let m = matrix(x.iter().map(|v| vec![*v]).collect(), y.clone());
        let model = fit_svr(&m, &SvrParams { cost, epsilon: eps, tol: 1e-10, max_passes: 100_000 }).unwrap();

        let oracle = svr_oracle(&x, &y, cost, eps);
        worst_obj = worst_obj.max((model.primal_objective(&m) - oracle).abs());

        // Box constraints, the equality constraint and complementary slackness.
        let mut kkt: f64 = model.dual_coef.iter().sum::<f64>().abs();
        for (i, &beta) in model.dual_coef.iter().enumerate() {
            kkt = kkt.max(beta.abs() - cost).max(0.0);
            let r = y[i] - model.predict_row(&[x[i]]);
            let inside = beta.abs() > 1e-9 && beta.abs() < cost - 1e-9;
            let violation = if inside {
                (r - eps * beta.signum()).abs()
            } else if beta.abs() <= 1e-9 {
                (r.abs() - eps).max(0.0)
            } else {
                (eps - r * beta.signum()).max(0.0)
            };
            kkt = kkt.max(violation);
        }
        worst_kkt = worst_kkt.max(kkt);
    }
    let ok = worst_obj <= 1e-4 && worst_kkt <= 1e-6;
    report(
        3,
        "SVR correctness",
        ok,
        &format!("20 problems of 8 points: objective gap {worst_obj:.1e} (tol 1e-4), worst KKT residual {worst_kkt:.1e} (tol 1e-6)"),
    );
}

// -------------------------------------------------------------------- forest

fn linear_problem(rng: &mut ChaCha8Rng, n: usize) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let target = rows
        .iter()
        .map(|r| 3.0 * r[0] - 2.0 * r[1] + 0.1 * gaussian(rng))
        .collect();
    matrix(rows, target)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn r2_of(m: &FeatureMatrix, pred: &[f64]) -> f64 {
    r_squared(&m.target, pred).unwrap()
}

#[test]
fn criterion_4_forest_learnability() {
    let (mut good_r2, mut good_rank) = (0, 0);
    let mut r2s = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let train = linear_problem(&mut rng, 500);
        let test = linear_problem(&mut rng, 500);
        let model = fit_forest(&train, &ForestParams { ntree: 200, rng_seed: seed, ..Default::default() }).unwrap();
        let pred: Vec<f64> = test.rows.iter().map(|r| model.predict_row(r)).collect();
        let r2 = r2_of(&test, &pred);
        r2s.push(r2);
        good_r2 += usize::from(r2 >= 0.9);
        let mut order: Vec<usize> = (0..model.importance.len()).collect();
        order.sort_by(|a, b| model.importance[*b].total_cmp(&model.importance[*a]));
        let mut top = [order[0], order[1]];
        top.sort();
        good_rank += usize::from(top == [0, 1]);
    }
    let min_r2 = r2s.iter().cloned().fold(f64::INFINITY, f64::min);
    report(
        4,
        "forest learnability",
        good_r2 >= 18 && good_rank >= 18,
        &format!("test R2 >= 0.9 in {good_r2}/20 seeds (min {min_r2:.3}); x1, x2 top-2 importance in {good_rank}/20"),
    );
}

// -------------------------------------------------------------------- Boruta

/// Five informative columns (the Friedman #1 response) and ten noise columns.
fn boruta_problem(seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
    let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..15).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let target = rows
        .iter()
        .map(|x| {
            10.0 * (std::f64::consts::PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
                + gaussian(&mut rng)
        })
        .collect();
    let names = (0..15).map(|j| if j < 5 { format!("signal{j}") } else { format!("noise{}", j - 5) }).collect();
    let dates = (0..500).map(|d| NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + chrono::Days::new(d)).collect();
    FeatureMatrix::new(names, dates, rows, target).unwrap()
}

#[test]
fn criterion_5_boruta_discrimination() {
    let mut passing = 0;
    let mut slowest = Duration::ZERO;
    let mut notes = Vec::new();
    for seed in 0..20 {
        let m = boruta_problem(seed);
        let start = Instant::now();
        let verdicts = run_boruta(&m, &BorutaConfig { max_runs: 99, rng_seed: seed, ..Default::default() }).unwrap();
        slowest = slowest.max(start.elapsed());
        let decision = |name: &str| verdicts.iter().find(|v| v.feature_name == name).unwrap().decision;
        let informative = (0..5).all(|j| decision(&format!("signal{j}")) == Decision::Confirmed);
        let rejected = (0..10).filter(|j| decision(&format!("noise{j}")) == Decision::Rejected).count();
        if informative && rejected >= 8 {
            passing += 1;
        } else {
            notes.push(format!("seed {seed}: informative confirmed={informative}, noise rejected {rejected}/10"));
        }
    }
    let ok = passing >= 19 && slowest < Duration::from_secs(60);
    let mut detail = format!("{passing}/20 seeds confirm all 5 informative and reject >= 8/10 noise; slowest run {slowest:.2?}");
    if !notes.is_empty() {
        detail.push_str(&format!(" [{}]", notes.join("; ")));
    }
    report(5, "Boruta discrimination", ok, &detail);
}

// ------------------------------------------------------------------ stacking

fn stacking_problem(rng: &mut ChaCha8Rng, n: usize) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let target = rows
        .iter()
        .map(|x| 2.0 * x[0] - x[1] + 1.5 * (3.0 * x[2]).sin() + x[3] * x[3] + 0.3 * gaussian(rng))
        .collect();
    matrix(rows, target)
}

fn test_rmse(spec: &LearnerSpec, train: &FeatureMatrix, test: &FeatureMatrix) -> f64 {
    let model = spec.fit(train).unwrap();
    rmse(&test.target, &model.predict(test).unwrap()).unwrap()
}

#[test]
fn criterion_6_stacking_leak_free_and_competitive() {
    let forest = LearnerSpec::Forest(ForestParams { ntree: 100, ..Default::default() });
    let glmnet = LearnerSpec::ElasticNet(ElasticNetParams::default());
    let svr = LearnerSpec::Svr(SvrParams { cost: 1.0, ..Default::default() });

    let mut leak_free = true;
    let mut wins = 0;
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let train = stacking_problem(&mut rng, 300);
        let test = stacking_problem(&mut rng, 300);
        let cfg = StackConfig {
            base_specs: vec![forest.clone(), glmnet.clone()],
            rng_seed: seed,
            ..Default::default()
        };
        let oof = out_of_fold(&train, &cfg).unwrap();
        leak_free &= oof.is_leak_free() && !oof.provenance.is_empty();
        let stack = fit_stack(&train, &cfg).unwrap();
        let stacked = rmse(&test.target, &stack.predict_rows(&test.rows)).unwrap();
        let best = [&forest, &glmnet, &svr]
            .iter()
            .map(|s| test_rmse(s, &train, &test))
            .fold(f64::INFINITY, f64::min);
        let ratio = stacked / best;
        worst_ratio = worst_ratio.max(ratio);
        wins += usize::from(ratio <= 1.1);
    }
    report(
        6,
        "stacking",
        leak_free && wins >= 16,
        &format!(
            "every out-of-fold meta-feature leak-free: {leak_free}; stacked RMSE <= 1.1 x best of (rf, glmnet, svr) in {wins}/20 seeds (worst ratio {worst_ratio:.3})"
        ),
    );
}

// ------------------------------------------------------------------- metrics

#[test]
fn criterion_7_metric_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ordered = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..40);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        ordered += usize::from(rmse(&a, &f).unwrap() >= mae(&a, &f).unwrap());
    }
    let a = [3.0, 5.0, 7.5];
    let perfect = rmse(&a, &a).unwrap() == 0.0
        && mae(&a, &a).unwrap() == 0.0
        && mape(&a, &a).unwrap() == 0.0
        && r_squared(&a, &a).unwrap() == 1.0;
    let (a, f) = ([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]);
    let hand = [
        (mae(&a, &f).unwrap(), 2.0 / 3.0),
        (rmse(&a, &f).unwrap(), (2.0f64 / 3.0).sqrt()),
        (mape(&a, &f).unwrap(), (1.0 + 0.0 + 1.0 / 3.0) / 3.0 * 100.0),
        (r_squared(&a, &f).unwrap(), 0.0),
    ];
    let worst = hand.iter().map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    report(
        7,
        "metric identities",
        ordered == 1000 && perfect && worst <= 1e-12,
        &format!("RMSE >= MAE on {ordered}/1000 pairs; perfect forecast zeros: {perfect}; fixture error {worst:.1e} (tol 1e-12)"),
    );
}

// ------------------------------------------------------------------ protocol

fn synthetic_daily(first: NaiveDate, days: usize) -> OhlcvSeries {
    let rows = (0..days)
        .map(|d| {
            let c = 1000.0 + 200.0 * (d as f64 / 37.0).sin() + d as f64;
            OhlcvRow {
                date: first + chrono::Days::new(d as u64),
                open: c - 3.0,
                high: c + 10.0,
                low: c - 12.0,
                close: c,
                volume_from: 1e4 + (d % 17) as f64 * 100.0,
                volume_to: 1e7 + (d % 23) as f64 * 1e5,
            }
        })
        .collect();
    OhlcvSeries::new(rows).unwrap()
}

#[test]
fn criterion_8_protocol_fidelity() {
    let mut notes = Vec::new();
    let mut ok = true;
    for (preset, folds, repeats) in [
        (CvPreset::Glmnet, 10, 6),
        (CvPreset::Forest, 12, 8),
        (CvPreset::Svr, 10, 1),
        (CvPreset::StackMeta, 10, 5),
    ] {
        let s = splits(500, &CvSpec::preset(preset, 1)).unwrap();
        let pairs: std::collections::BTreeSet<(usize, usize)> = s.iter().map(|f| (f.repeat, f.fold)).collect();
        let good = s.len() == folds * repeats && pairs.len() == folds * repeats;
        ok &= good;
        notes.push(format!("{preset:?} {}x{}", s.len() / repeats.max(1), repeats));
    }

    // 2785 daily rows with the boundary placed as in the reference data.
    let boundary = NaiveDate::from_ymd_opt(2018, 2, 5).unwrap();
    let series = synthetic_daily(boundary - chrono::Days::new(2227), 2785);
    let (train, test) = split(&series, SplitSpec { boundary_date: boundary }).unwrap();
    ok &= (train.len(), test.len()) == (2228, 557);
    notes.push(format!("synthetic split {}/{}", train.len(), test.len()));

    // Warm-up rows come off the head of the training slice only.
    let m = build_feature_matrix(&series, &reference_candidate_specs()).unwrap();
    let warm_up = series.len() - m.n_rows();
    let train_rows = m.dates.iter().filter(|d| **d <= boundary).count();
    ok &= train_rows == 2228 - warm_up && m.n_rows() - train_rows == 557;
    notes.push(format!("after {warm_up} warm-up rows {}/{}", train_rows, m.n_rows() - train_rows));

    if let Ok(path) = std::env::var("STACKCAST_REAL_DATA") {
        let real = load_csv(&path, &CsvSchema::default()).unwrap();
        let (a, b) = split(&real, SplitSpec { boundary_date: boundary }).unwrap();
        ok &= (a.len(), b.len()) == (2228, 557);
        notes.push(format!("real data split {}/{}", a.len(), b.len()));
    }
    report(8, "protocol fidelity", ok, &notes.join(", "));
}

// --------------------------------------------------------------- determinism

fn fixture_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/fixture.toml")
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            if rel.starts_with('.') || rel == "manifest.json" {
                continue;
            }
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_9_determinism() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut times = Vec::new();
    for d in &dirs {
        let start = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_stackcast"))
            .arg("--config")
            .arg(fixture_config())
            .arg("--out")
            .arg(d.path())
            .args(["--quiet", "run-all"])
            .output()
            .unwrap();
        times.push(start.elapsed());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = artifacts(dirs[0].path());
    let b = artifacts(dirs[1].path());
    let models = a.iter().filter(|(n, _)| n.starts_with("models")).count();
    let identical = a == b && models == 4;
    let slowest = times.iter().max().unwrap();
    report(
        9,
        "determinism",
        identical && *slowest < Duration::from_secs(120),
        &format!("{} artifacts ({models} model files) byte-identical across two seeded runs: {identical}; slowest run {slowest:.2?}", a.len()),
    );
}
