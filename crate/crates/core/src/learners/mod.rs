//! Regression learners behind a common fit/predict contract.
//!
//! - [`elastic_net`]: penalized least squares by cyclic coordinate descent.
//! - [`forest`]: random forest of variance-reduction regression trees.
//! - [`svr`]: linear epsilon-insensitive support vector regression.

pub mod elastic_net;
pub mod forest;
pub mod svr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;

pub use elastic_net::{fit_elastic_net, ElasticNetModel, ElasticNetParams};
pub use forest::{fit_forest, ForestModel, ForestParams};
pub use svr::{fit_svr, SvrModel, SvrParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("need at least {needed} training rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("non-finite value in training data")]
    NonFiniteInput,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("columns {found:?} do not match training columns {expected:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
}

pub(crate) fn check_finite(m: &FeatureMatrix) -> Result<(), LearnError> {
    let finite = m.rows.iter().flatten().chain(&m.target).all(|v| v.is_finite());
    if finite {
        Ok(())
    } else {
        Err(LearnError::NonFiniteInput)
    }
}

pub(crate) fn check_columns(expected: &[String], m: &FeatureMatrix) -> Result<(), LearnError> {
    if expected != m.column_names.as_slice() {
        return Err(LearnError::ColumnMismatch {
            expected: expected.to_vec(),
            found: m.column_names.clone(),
        });
    }
    Ok(())
}

/// Hyperparameters of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    ElasticNet(ElasticNetParams),
    Forest(ForestParams),
    Svr(SvrParams),
}

impl LearnerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::ElasticNet(_) => "glmnet",
            LearnerSpec::Forest(_) => "rf",
            LearnerSpec::Svr(_) => "svr",
        }
    }

    /// Short human-readable hyperparameter summary.
    pub fn describe(&self) -> String {
        match self {
            LearnerSpec::ElasticNet(p) => format!("alpha={} lambda={}", p.alpha, p.lambda),
            LearnerSpec::Forest(p) => format!(
                "ntree={} mtry={} bag_fraction={} min_node_size={}",
                p.ntree,
                p.mtry.map_or("auto".to_string(), |m| m.to_string()),
                p.bag_fraction,
                p.min_node_size
            ),
            LearnerSpec::Svr(p) => format!("cost={} epsilon={}", p.cost, p.epsilon),
        }
    }

    pub fn fit(&self, m: &FeatureMatrix) -> Result<FittedModel, LearnError> {
        Ok(match self {
            LearnerSpec::ElasticNet(p) => FittedModel::ElasticNet(fit_elastic_net(m, p)?),
            LearnerSpec::Forest(p) => FittedModel::Forest(fit_forest(m, p)?),
            LearnerSpec::Svr(p) => FittedModel::Svr(fit_svr(m, p)?),
        })
    }
}

/// A trained learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    ElasticNet(ElasticNetModel),
    Forest(ForestModel),
    Svr(SvrModel),
}

impl FittedModel {
    pub fn column_names(&self) -> &[String] {
        match self {
            FittedModel::ElasticNet(m) => &m.column_names,
            FittedModel::Forest(m) => &m.column_names,
            FittedModel::Svr(m) => &m.column_names,
        }
    }

    /// Predicts one value per row; columns are not checked.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        match self {
            FittedModel::ElasticNet(m) => rows.iter().map(|r| m.predict_row(r)).collect(),
            FittedModel::Forest(m) => rows.iter().map(|r| m.predict_row(r)).collect(),
            FittedModel::Svr(m) => rows.iter().map(|r| m.predict_row(r)).collect(),
        }
    }

    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<f64>, LearnError> {
        check_columns(self.column_names(), m)?;
        Ok(self.predict_rows(&m.rows))
    }
}
