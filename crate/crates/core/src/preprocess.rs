//! Min-max scaling fit on the training slice and applied unchanged elsewhere.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;

#[derive(Debug, Error)]
pub enum ScaleError {
    #[error("cannot fit a scaler on an empty matrix")]
    EmptyMatrix,
    #[error("column mismatch: scaler has {expected:?}, matrix has {found:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Range {
        values.fold(
            Range {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |r, v| Range {
                min: r.min.min(v),
                max: r.max.max(v),
            },
        )
    }

    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    /// `(x - min) / (max - min)`; 0 for a degenerate range. Not clamped.
    pub fn scale(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn unscale(&self, z: f64) -> f64 {
        z * (self.max - self.min) + self.min
    }
}

/// Per-column ranges of the training features and target.
///
/// An identity scaler leaves values untouched and is written when
/// normalization is disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    #[serde(default)]
    pub identity: bool,
    pub column_names: Vec<String>,
    pub columns: Vec<Range>,
    pub target: Range,
}

pub fn fit_scaler(train: &FeatureMatrix) -> Result<ScalerState, ScaleError> {
    if train.is_empty() {
        return Err(ScaleError::EmptyMatrix);
    }
    let columns: Vec<Range> = (0..train.n_features())
        .map(|j| Range::of(train.rows.iter().map(|r| r[j])))
        .collect();
    for (name, r) in train.column_names.iter().zip(&columns) {
        if r.is_degenerate() {
            log::warn!("column `{name}` is constant on the training slice; it scales to 0");
        }
    }
    Ok(ScalerState {
        identity: false,
        column_names: train.column_names.clone(),
        columns,
        target: Range::of(train.target.iter().copied()),
    })
}

impl ScalerState {
    pub fn identity(column_names: &[String]) -> Self {
        let unit = Range { min: 0.0, max: 1.0 };
        Self {
            identity: true,
            column_names: column_names.to_vec(),
            columns: vec![unit; column_names.len()],
            target: unit,
        }
    }

    fn check(&self, m: &FeatureMatrix) -> Result<(), ScaleError> {
        if self.column_names != m.column_names {
            return Err(ScaleError::ColumnMismatch {
                expected: self.column_names.clone(),
                found: m.column_names.clone(),
            });
        }
        Ok(())
    }

    fn map(&self, m: &FeatureMatrix, f: impl Fn(&Range, f64) -> f64) -> FeatureMatrix {
        FeatureMatrix {
            column_names: m.column_names.clone(),
            dates: m.dates.clone(),
            rows: m
                .rows
                .iter()
                .map(|r| r.iter().zip(&self.columns).map(|(&x, c)| f(c, x)).collect())
                .collect(),
            target: m.target.iter().map(|&y| f(&self.target, y)).collect(),
        }
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix, ScaleError> {
        self.check(m)?;
        if self.identity {
            return Ok(m.clone());
        }
        Ok(self.map(m, Range::scale))
    }

    /// Maps features and target back to original units. Constant columns
    /// come back as their training value.
    pub fn inverse_transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix, ScaleError> {
        self.check(m)?;
        if self.identity {
            return Ok(m.clone());
        }
        Ok(self.map(m, Range::unscale))
    }

    /// Scales feature rows only (for prediction inputs without targets).
    pub fn scale_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if self.identity {
            return rows.to_vec();
        }
        rows.iter()
            .map(|r| r.iter().zip(&self.columns).map(|(&x, c)| c.scale(x)).collect())
            .collect()
    }

    pub fn scale_target(&self, y: f64) -> f64 {
        if self.identity {
            y
        } else {
            self.target.scale(y)
        }
    }

    pub fn unscale_target(&self, z: f64) -> f64 {
        if self.identity {
            z
        } else {
            self.target.unscale(z)
        }
    }

    /// Restricts the state to a column subset, in the order given.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Option<ScalerState> {
        let idx = names
            .iter()
            .map(|n| self.column_names.iter().position(|c| c == n.as_ref()))
            .collect::<Option<Vec<_>>>()?;
        Some(ScalerState {
            identity: self.identity,
            column_names: idx.iter().map(|&j| self.column_names[j].clone()).collect(),
            columns: idx.iter().map(|&j| self.columns[j]).collect(),
            target: self.target,
        })
    }

    pub fn save_json<P: AsRef<Path>>(&self, path: P) -> Result<(), ScaleError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json<P: AsRef<Path>>(path: P) -> Result<ScalerState, ScaleError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
