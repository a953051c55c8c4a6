//! Two-level stacked generalization.
//!
//! Base learners are trained fold by fold; each row's meta-feature is the
//! prediction of a base model whose training fold excluded that row,
//! averaged over repeats. The meta-learner is fit on those out-of-fold
//! predictions, and the base learners are refit on all rows for prediction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cv::{splits, CvError, CvSpec};
use crate::features::FeatureMatrix;
use crate::learners::{
    check_columns, ElasticNetParams, FittedModel, ForestParams, LearnError, LearnerSpec, SvrParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StackError {
    #[error("stack needs at least one base learner")]
    NoBaseLearners,
    #[error(transparent)]
    Resampling(#[from] CvError),
    #[error("base learner {base} ({name}), repeat {repeat}, fold {fold}: {source}")]
    Base {
        base: usize,
        name: String,
        repeat: usize,
        fold: usize,
        #[source]
        source: LearnError,
    },
    #[error("refitting base learner {base} ({name}) on all rows: {source}")]
    Refit {
        base: usize,
        name: String,
        #[source]
        source: LearnError,
    },
    #[error("meta-learner: {0}")]
    Meta(#[source] LearnError),
    #[error(transparent)]
    Predict(#[from] LearnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StackConfig {
    pub base_specs: Vec<LearnerSpec>,
    pub meta_spec: LearnerSpec,
    pub folds: usize,
    pub repeats: usize,
    pub rng_seed: u64,
}

/// Meta-learner default: linear SVR with cost 1 and a zero-width tube.
pub fn default_meta_spec() -> LearnerSpec {
    LearnerSpec::Svr(SvrParams {
        cost: 1.0,
        epsilon: 0.0,
        tol: 1e-6,
        ..Default::default()
    })
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            base_specs: vec![
                LearnerSpec::Forest(ForestParams::default()),
                LearnerSpec::ElasticNet(ElasticNetParams::default()),
            ],
            meta_spec: default_meta_spec(),
            folds: 10,
            repeats: 5,
            rng_seed: 0,
        }
    }
}

impl StackConfig {
    fn cv_spec(&self) -> CvSpec {
        CvSpec {
            folds: self.folds,
            repeats: self.repeats,
            rng_seed: self.rng_seed,
            ..Default::default()
        }
    }

    /// Column names of the meta-feature matrix.
    pub fn meta_columns(&self) -> Vec<String> {
        self.base_specs
            .iter()
            .enumerate()
            .map(|(i, s)| format!("base{i}_{}", s.name()))
            .collect()
    }
}

/// Which base fit produced a block of meta-features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldProvenance {
    pub base: usize,
    pub repeat: usize,
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub predicted_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutOfFold {
    /// Row-major `n × bases` matrix of repeat-averaged predictions.
    pub features: Vec<Vec<f64>>,
    pub provenance: Vec<FoldProvenance>,
}

impl OutOfFold {
    /// True when no meta-feature came from a model that saw its row.
    pub fn is_leak_free(&self) -> bool {
        self.provenance
            .iter()
            .all(|p| p.predicted_rows.iter().all(|r| !p.train_rows.contains(r)))
    }
}

pub fn out_of_fold(m: &FeatureMatrix, cfg: &StackConfig) -> Result<OutOfFold, StackError> {
    if cfg.base_specs.is_empty() {
        return Err(StackError::NoBaseLearners);
    }
    let folds = splits(m.n_rows(), &cfg.cv_spec())?;
    let tasks: Vec<(usize, usize)> = (0..cfg.base_specs.len())
        .flat_map(|b| (0..folds.len()).map(move |f| (b, f)))
        .collect();
    let fitted = tasks
        .par_iter()
        .map(|&(b, f)| {
            let split = &folds[f];
            let spec = &cfg.base_specs[b];
            let model = spec.fit(&m.take_rows(&split.train)).map_err(|source| StackError::Base {
                base: b,
                name: spec.name().into(),
                repeat: split.repeat,
                fold: split.fold,
                source,
            })?;
            let rows: Vec<Vec<f64>> = split.validate.iter().map(|&i| m.rows[i].clone()).collect();
            Ok((b, f, model.predict_rows(&rows)))
        })
        .collect::<Result<Vec<_>, StackError>>()?;

    let n = m.n_rows();
    let nb = cfg.base_specs.len();
    let mut sums = vec![vec![0.0; nb]; n];
    let mut counts = vec![vec![0usize; nb]; n];
    let mut provenance = Vec::with_capacity(fitted.len());
    for (b, f, preds) in fitted {
        let split = &folds[f];
        for (&row, p) in split.validate.iter().zip(preds) {
            sums[row][b] += p;
            counts[row][b] += 1;
        }
        provenance.push(FoldProvenance {
            base: b,
            repeat: split.repeat,
            fold: split.fold,
            train_rows: split.train.clone(),
            predicted_rows: split.validate.clone(),
        });
    }
    let features = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().zip(c).map(|(v, k)| v / k as f64).collect())
        .collect();
    Ok(OutOfFold {
        features,
        provenance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub config: StackConfig,
    pub column_names: Vec<String>,
    /// Base learners refit on the full training matrix, in config order.
    pub bases: Vec<FittedModel>,
    pub meta: FittedModel,
}

/// Meta-feature matrix for the given out-of-fold features.
pub fn meta_matrix(m: &FeatureMatrix, cfg: &StackConfig, oof: &OutOfFold) -> FeatureMatrix {
    FeatureMatrix {
        column_names: cfg.meta_columns(),
        dates: m.dates.clone(),
        rows: oof.features.clone(),
        target: m.target.clone(),
    }
}

pub fn fit_stack(m: &FeatureMatrix, cfg: &StackConfig) -> Result<StackedModel, StackError> {
    fit_stack_traced(m, cfg).map(|(model, _)| model)
}

/// Fits the stack and also returns the out-of-fold meta-features with their
/// provenance.
pub fn fit_stack_traced(
    m: &FeatureMatrix,
    cfg: &StackConfig,
) -> Result<(StackedModel, OutOfFold), StackError> {
    let oof = out_of_fold(m, cfg)?;
    let meta = cfg
        .meta_spec
        .fit(&meta_matrix(m, cfg, &oof))
        .map_err(StackError::Meta)?;
    let bases = cfg
        .base_specs
        .par_iter()
        .enumerate()
        .map(|(b, spec)| {
            spec.fit(m).map_err(|source| StackError::Refit {
                base: b,
                name: spec.name().into(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((
        StackedModel {
            config: cfg.clone(),
            column_names: m.column_names.clone(),
            bases,
            meta,
        },
        oof,
    ))
}

impl StackedModel {
    /// Base-model predictions as meta-feature rows.
    pub fn meta_features(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let per_base: Vec<Vec<f64>> = self.bases.iter().map(|b| b.predict_rows(rows)).collect();
        (0..rows.len())
            .map(|i| per_base.iter().map(|p| p[i]).collect())
            .collect()
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        self.meta.predict_rows(&self.meta_features(rows))
    }
}

pub fn predict_stack(model: &StackedModel, m: &FeatureMatrix) -> Result<Vec<f64>, StackError> {
    check_columns(&model.column_names, m)?;
    Ok(model.predict_rows(&m.rows))
}
