//! Versioned JSON documents for trained models.
//!
//! A document carries everything needed to predict in a fresh process: the
//! fitted model (single learner or stack), its training columns, the scaler
//! fit on the training slice and the seed that produced it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::learners::{FittedModel, LearnerSpec};
use crate::preprocess::{ScaleError, ScalerState};
use crate::stacking::StackedModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("model document version {found} is not supported (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("model `{model}` was trained on {expected:?} but the matrix has {found:?}")]
    ModelFeatureMismatch {
        model: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("scaler columns do not match model columns")]
    ScalerMismatch,
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "snake_case")]
pub enum TrainedModel {
    Single {
        spec: LearnerSpec,
        model: FittedModel,
    },
    Stack(StackedModel),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Single { spec, .. } => spec.name(),
            TrainedModel::Stack(_) => "stack",
        }
    }

    pub fn column_names(&self) -> &[String] {
        match self {
            TrainedModel::Single { model, .. } => model.column_names(),
            TrainedModel::Stack(s) => &s.column_names,
        }
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        match self {
            TrainedModel::Single { model, .. } => model.predict_rows(rows),
            TrainedModel::Stack(s) => s.predict_rows(rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub name: String,
    pub rng_seed: u64,
    pub model: TrainedModel,
    /// Scaler restricted to the model's columns.
    pub scaler: ScalerState,
}

impl ModelDocument {
    pub fn new(
        name: &str,
        rng_seed: u64,
        model: TrainedModel,
        scaler: ScalerState,
    ) -> Result<Self, PersistError> {
        if scaler.column_names != model.column_names() {
            return Err(PersistError::ScalerMismatch);
        }
        Ok(Self {
            format_version: FORMAT_VERSION,
            name: name.to_string(),
            rng_seed,
            model,
            scaler,
        })
    }

    pub fn to_json(&self) -> Result<String, PersistError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, PersistError> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != FORMAT_VERSION {
            return Err(PersistError::UnsupportedVersion {
                found: header.format_version,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), PersistError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, PersistError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self, m: &FeatureMatrix) -> Result<(), PersistError> {
        if m.column_names != self.model.column_names() {
            return Err(PersistError::ModelFeatureMismatch {
                model: self.name.clone(),
                expected: self.model.column_names().to_vec(),
                found: m.column_names.clone(),
            });
        }
        Ok(())
    }

    /// Predictions for an already scaled matrix, in scaled target units.
    pub fn predict_scaled(&self, m: &FeatureMatrix) -> Result<Vec<f64>, PersistError> {
        self.check(m)?;
        Ok(self.model.predict_rows(&m.rows))
    }

    /// Predictions for a matrix in original units, returned in original
    /// target units.
    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<f64>, PersistError> {
        self.check(m)?;
        let rows = self.scaler.scale_rows(&m.rows);
        Ok(self
            .model
            .predict_rows(&rows)
            .into_iter()
            .map(|z| self.scaler.unscale_target(z))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::ElasticNetParams;
    use crate::preprocess::fit_scaler;

    fn doc() -> (ModelDocument, FeatureMatrix) {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let target = rows.iter().map(|r| 100.0 + 3.0 * r[0]).collect();
        let m = FeatureMatrix::from_xy(rows, target).unwrap();
        let scaler = fit_scaler(&m).unwrap();
        let spec = LearnerSpec::ElasticNet(ElasticNetParams { lambda: 0.0, tol: 1e-14, ..Default::default() });
        let model = spec.fit(&scaler.transform(&m).unwrap()).unwrap();
        let d = ModelDocument::new("glmnet", 3, TrainedModel::Single { spec, model }, scaler).unwrap();
        (d, m)
    }

    #[test]
    fn round_trip_and_predict_in_original_units() {
        let (d, m) = doc();
        let back = ModelDocument::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
        let pred = back.predict(&m).unwrap();
        for (p, y) in pred.iter().zip(&m.target) {
            assert!((p - y).abs() < 1e-8, "{p} vs {y}");
        }
        assert_eq!(back.model.kind(), "glmnet");
    }

    #[test]
    fn rejects_other_versions_and_columns() {
        let (d, m) = doc();
        let text = d.to_json().unwrap().replacen("\"format_version\": 1", "\"format_version\": 9", 1);
        assert!(matches!(ModelDocument::from_json(&text), Err(PersistError::UnsupportedVersion { found: 9 })));
        let other = m.select_columns(&["x1", "x0"]).unwrap();
        assert!(matches!(d.predict(&other), Err(PersistError::ModelFeatureMismatch { .. })));
        let narrow = d.scaler.select_columns(&["x0"]).unwrap();
        assert!(matches!(
            ModelDocument::new("x", 0, d.model.clone(), narrow),
            Err(PersistError::ScalerMismatch)
        ));
    }
}
