//! Boruta all-relevant feature selection.
//!
//! Each run appends a row-permuted shadow copy of every live feature, fits a
//! forest on the widened matrix and counts a hit for each real feature whose
//! importance beats the best shadow. Hit counts are tested against a fair
//! coin after every run, with a Bonferroni correction over the features that
//! are still undecided.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::learners::forest::fit_forest_with_permutation_importance;
use crate::learners::{fit_forest, ForestParams, LearnError};

pub const MIN_ROWS: usize = 20;

#[derive(Debug, Error)]
pub enum BorutaError {
    #[error("Boruta needs at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("Boruta needs at least 2 features, got {0}")]
    TooFewFeatures(usize),
    #[error("invalid Boruta configuration: {0}")]
    InvalidConfig(String),
    #[error("forest fit in run {run}: {source}")]
    Forest {
        run: usize,
        #[source]
        source: LearnError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceKind {
    /// Mean decrease in impurity reported by the forest. Fast, but a noise
    /// column that happens to track the in-sample residual keeps its lead
    /// over freshly drawn shadows run after run.
    Impurity,
    /// Out-of-bag MSE increase after permuting one column.
    #[default]
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BorutaConfig {
    pub max_runs: usize,
    pub p_value: f64,
    pub forest_params: ForestParams,
    pub importance: ImportanceKind,
    pub rng_seed: u64,
}

impl Default for BorutaConfig {
    fn default() -> Self {
        Self {
            max_runs: 99,
            p_value: 0.01,
            forest_params: ForestParams {
                ntree: 100,
                ..Default::default()
            },
            importance: ImportanceKind::default(),
            rng_seed: 0,
        }
    }
}

impl BorutaConfig {
    pub fn validate(&self) -> Result<(), BorutaError> {
        if self.max_runs == 0 {
            return Err(BorutaError::InvalidConfig("max_runs must be at least 1".into()));
        }
        if !(self.p_value > 0.0 && self.p_value < 1.0) {
            return Err(BorutaError::InvalidConfig(format!(
                "p_value {} outside (0, 1)",
                self.p_value
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Confirmed,
    Tentative,
    Rejected,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Confirmed => "Confirmed",
            Decision::Tentative => "Tentative",
            Decision::Rejected => "Rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVerdict {
    pub feature_name: String,
    pub decision: Decision,
    /// Mean importance over the runs in which the feature took part.
    pub mean_importance: f64,
    pub hit_count: usize,
}

/// Per-run importances, kept for the box-plot export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceHistory {
    pub feature_names: Vec<String>,
    /// `runs × features`; `None` once a feature has been rejected.
    pub real: Vec<Vec<Option<f64>>>,
    pub shadow_min: Vec<f64>,
    pub shadow_mean: Vec<f64>,
    pub shadow_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BorutaResult {
    pub verdicts: Vec<FeatureVerdict>,
    pub history: ImportanceHistory,
    pub runs: usize,
}

pub fn run_boruta(m: &FeatureMatrix, cfg: &BorutaConfig) -> Result<Vec<FeatureVerdict>, BorutaError> {
    run_boruta_traced(m, cfg).map(|r| r.verdicts)
}

fn run_seed(seed: u64, run: usize) -> u64 {
    seed ^ (run as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn run_boruta_traced(m: &FeatureMatrix, cfg: &BorutaConfig) -> Result<BorutaResult, BorutaError> {
    cfg.validate()?;
    let p = m.n_features();
    let n = m.n_rows();
    if p < 2 {
        return Err(BorutaError::TooFewFeatures(p));
    }
    if n < MIN_ROWS {
        return Err(BorutaError::TooFewRows { needed: MIN_ROWS, got: n });
    }

    let mut status: Vec<Option<Decision>> = vec![None; p];
    let mut hits = vec![0usize; p];
    let mut history = ImportanceHistory {
        feature_names: m.column_names.clone(),
        real: Vec::new(),
        shadow_min: Vec::new(),
        shadow_mean: Vec::new(),
        shadow_max: Vec::new(),
    };
    let mut shadow_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut runs = 0;
    while runs < cfg.max_runs && status.iter().any(|s| s.is_none()) {
        let live: Vec<usize> = (0..p).filter(|&j| status[j] != Some(Decision::Rejected)).collect();
        // At least five probes so the shadow maximum is not too easy to beat.
        let n_shadow = live.len().max(5);
        shadow_rng.set_stream(runs as u64);
        let mut shadows = Vec::with_capacity(n_shadow);
        for s in 0..n_shadow {
            let mut col: Vec<f64> = m.rows.iter().map(|r| r[live[s % live.len()]]).collect();
            col.shuffle(&mut shadow_rng);
            shadows.push(col);
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                live.iter()
                    .map(|&j| m.rows[i][j])
                    .chain(shadows.iter().map(|c| c[i]))
                    .collect()
            })
            .collect();
        let names = live
            .iter()
            .map(|&j| m.column_names[j].clone())
            .chain((0..n_shadow).map(|s| format!("shadow{s}")))
            .collect();
        let wide = FeatureMatrix {
            column_names: names,
            dates: m.dates.clone(),
            rows,
            target: m.target.clone(),
        };
        let params = ForestParams {
            rng_seed: run_seed(cfg.rng_seed, runs),
            ..cfg.forest_params.clone()
        };
        let forest_err = |source| BorutaError::Forest { run: runs, source };
        let imp = match cfg.importance {
            ImportanceKind::Impurity => fit_forest(&wide, &params).map_err(forest_err)?.importance,
            ImportanceKind::Permutation => {
                fit_forest_with_permutation_importance(&wide, &params)
                    .map_err(forest_err)?
                    .1
            }
        };
        let (real_imp, shadow_imp) = imp.split_at(live.len());
        let shadow_max = shadow_imp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        history.shadow_max.push(shadow_max);
        history.shadow_min.push(shadow_imp.iter().copied().fold(f64::INFINITY, f64::min));
        history.shadow_mean.push(shadow_imp.iter().sum::<f64>() / n_shadow as f64);
        let mut row = vec![None; p];
        for (k, &j) in live.iter().enumerate() {
            row[j] = Some(real_imp[k]);
            if real_imp[k] > shadow_max {
                hits[j] += 1;
            }
        }
        history.real.push(row);
        runs += 1;

        let undecided: Vec<usize> = (0..p).filter(|&j| status[j].is_none()).collect();
        let threshold = cfg.p_value / undecided.len() as f64;
        for &j in &undecided {
            if binom_upper_tail(hits[j], runs) < threshold {
                status[j] = Some(Decision::Confirmed);
            } else if binom_lower_tail(hits[j], runs) < threshold {
                status[j] = Some(Decision::Rejected);
            }
        }
        log::debug!(
            "boruta run {runs}: shadowMax {shadow_max:.6}, {} undecided",
            status.iter().filter(|s| s.is_none()).count()
        );
    }

    let verdicts = (0..p)
        .map(|j| {
            let seen: Vec<f64> = history.real.iter().filter_map(|r| r[j]).collect();
            FeatureVerdict {
                feature_name: m.column_names[j].clone(),
                decision: status[j].unwrap_or(Decision::Tentative),
                mean_importance: seen.iter().sum::<f64>() / seen.len() as f64,
                hit_count: hits[j],
            }
        })
        .collect();
    Ok(BorutaResult { verdicts, history, runs })
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// P(X ≤ k) for X ~ Binomial(n, 1/2).
pub fn binom_lower_tail(k: usize, n: usize) -> f64 {
    if k >= n {
        return 1.0;
    }
    let ln_half = -(n as f64) * std::f64::consts::LN_2;
    let terms: Vec<f64> = (0..=k).map(|i| ln_choose(n, i) + ln_half).collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()).exp().min(1.0)
}

/// P(X ≥ k) for X ~ Binomial(n, 1/2).
pub fn binom_upper_tail(k: usize, n: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // Symmetry of the fair coin: P(X ≥ k) = P(X ≤ n − k).
    binom_lower_tail(n - k, n)
}

/// Verdicts ordered by mean importance, highest first.
pub fn importance_report(verdicts: &[FeatureVerdict]) -> Vec<FeatureVerdict> {
    let mut out = verdicts.to_vec();
    out.sort_by(|a, b| b.mean_importance.total_cmp(&a.mean_importance));
    out
}

/// Names of the features kept for training, in their original order.
pub fn selected_features(verdicts: &[FeatureVerdict], include_tentative: bool) -> Vec<String> {
    verdicts
        .iter()
        .filter(|v| match v.decision {
            Decision::Confirmed => true,
            Decision::Tentative => include_tentative,
            Decision::Rejected => false,
        })
        .map(|v| v.feature_name.clone())
        .collect()
}

/// `feature,decision,mean_importance,hit_count`, ranked.
pub fn write_report_csv<W: Write>(verdicts: &[FeatureVerdict], w: W) -> Result<(), BorutaError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["feature", "decision", "mean_importance", "hit_count"])?;
    for v in importance_report(verdicts) {
        out.write_record([
            v.feature_name.clone(),
            v.decision.as_str().to_string(),
            v.mean_importance.to_string(),
            v.hit_count.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Long-format importance samples: `feature,run,importance`, followed by
/// the `shadowMin`, `shadowMean` and `shadowMax` series.
pub fn write_boxplot_csv<W: Write>(history: &ImportanceHistory, w: W) -> Result<(), BorutaError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["feature", "run", "importance"])?;
    for (j, name) in history.feature_names.iter().enumerate() {
        for (run, row) in history.real.iter().enumerate() {
            if let Some(v) = row[j] {
                out.write_record([name.clone(), (run + 1).to_string(), v.to_string()])?;
            }
        }
    }
    for (name, series) in [
        ("shadowMin", &history.shadow_min),
        ("shadowMean", &history.shadow_mean),
        ("shadowMax", &history.shadow_max),
    ] {
        for (run, v) in series.iter().enumerate() {
            out.write_record([name.to_string(), (run + 1).to_string(), v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}
