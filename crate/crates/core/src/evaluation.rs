//! Forecast accuracy metrics, residual series and model comparison tables.

use std::fmt::Write as _;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("actual has {actual} values, forecast has {forecast}")]
    LengthMismatch { actual: usize, forecast: usize },
    #[error("no values to evaluate")]
    Empty,
    #[error("MAPE is undefined: actual value at index {0} is zero")]
    ZeroActualForMape(usize),
    #[error("R² is undefined for constant actual values")]
    ConstantActualForR2,
}

fn check_lengths(actual: &[f64], forecast: &[f64]) -> Result<(), MetricError> {
    if actual.len() != forecast.len() {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            forecast: forecast.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn rmse(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, forecast)?;
    let ss: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f).powi(2)).sum();
    Ok((ss / actual.len() as f64).sqrt())
}

pub fn mae(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, forecast)?;
    let s: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f).abs()).sum();
    Ok(s / actual.len() as f64)
}

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, forecast)?;
    if let Some(i) = actual.iter().position(|a| *a == 0.0) {
        return Err(MetricError::ZeroActualForMape(i));
    }
    let s: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f).abs() / a.abs()).sum();
    Ok(s / actual.len() as f64 * 100.0)
}

/// Coefficient of determination against the mean of `actual`.
pub fn r_squared(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, forecast)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::ConstantActualForR2);
    }
    let ss_res: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slice {
    Train,
    Test,
}

impl Slice {
    pub fn label(self) -> &'static str {
        match self {
            Slice::Train => "Training",
            Slice::Test => "Testing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_name: String,
    pub slice: Slice,
    /// Percent.
    pub mape: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r_squared: f64,
}

/// All four metrics. The report is labelled as an unnamed test slice; use
/// [`MetricsReport::labelled`] to name it.
pub fn compute_metrics(actual: &[f64], forecast: &[f64]) -> Result<MetricsReport, MetricError> {
    Ok(MetricsReport {
        model_name: String::new(),
        slice: Slice::Test,
        mape: mape(actual, forecast)?,
        rmse: rmse(actual, forecast)?,
        mae: mae(actual, forecast)?,
        r_squared: r_squared(actual, forecast)?,
    })
}

impl MetricsReport {
    pub fn labelled(mut self, model_name: &str, slice: Slice) -> Self {
        self.model_name = model_name.to_string();
        self.slice = slice;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub dates: Vec<NaiveDate>,
    /// `actual − forecast`; positive means under-forecast.
    pub residuals: Vec<f64>,
}

pub fn error_series(
    actual: &[f64],
    forecast: &[f64],
    dates: &[NaiveDate],
) -> Result<ErrorSeries, MetricError> {
    if actual.len() != forecast.len() || dates.len() != actual.len() {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            forecast: forecast.len(),
        });
    }
    Ok(ErrorSeries {
        dates: dates.to_vec(),
        residuals: actual.iter().zip(forecast).map(|(a, f)| a - f).collect(),
    })
}

impl ErrorSeries {
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["date", "residual"])?;
        for (d, r) in self.dates.iter().zip(&self.residuals) {
            w.write_record([d.format("%Y-%m-%d").to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Metric {
    Mape,
    Rmse,
    Mae,
    R2,
}

impl Metric {
    const ALL: [Metric; 4] = [Metric::Mape, Metric::Rmse, Metric::Mae, Metric::R2];

    fn header(self) -> &'static str {
        match self {
            Metric::Mape => "MAPE (%)",
            Metric::Rmse => "RMSE (USD)",
            Metric::Mae => "MAE (USD)",
            Metric::R2 => "R-Squared",
        }
    }

    fn value(self, r: &MetricsReport) -> f64 {
        match self {
            Metric::Mape => r.mape,
            Metric::Rmse => r.rmse,
            Metric::Mae => r.mae,
            Metric::R2 => r.r_squared,
        }
    }

    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Metric::R2 => a > b,
            _ => a < b,
        }
    }
}

/// One cell of a [`ComparisonTable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub value: Option<f64>,
    pub best: bool,
}

/// Models as rows; (metric, slice) pairs as columns, testing before training.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub models: Vec<String>,
    pub columns: Vec<(String, Slice)>,
    pub cells: Vec<Vec<Cell>>,
}

pub fn comparison_table(reports: &[MetricsReport]) -> ComparisonTable {
    let mut models: Vec<String> = Vec::new();
    for r in reports {
        if !models.contains(&r.model_name) {
            models.push(r.model_name.clone());
        }
    }
    let slices = [Slice::Test, Slice::Train];
    let mut columns = Vec::new();
    let mut cells = vec![Vec::new(); models.len()];
    for metric in Metric::ALL {
        for slice in slices {
            let values: Vec<Option<f64>> = models
                .iter()
                .map(|m| {
                    reports
                        .iter()
                        .find(|r| &r.model_name == m && r.slice == slice)
                        .map(|r| metric.value(r))
                })
                .collect();
            if values.iter().all(Option::is_none) {
                continue;
            }
            let best = values
                .iter()
                .flatten()
                .copied()
                .reduce(|a, b| if metric.better(b, a) { b } else { a });
            columns.push((metric.header().to_string(), slice));
            for (row, v) in cells.iter_mut().zip(&values) {
                row.push(Cell {
                    value: *v,
                    best: v.is_some() && *v == best,
                });
            }
        }
    }
    ComparisonTable {
        models,
        columns,
        cells,
    }
}

impl ComparisonTable {
    /// Markdown rendering; best cells are bold.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Model |");
        for (h, slice) in &self.columns {
            let _ = write!(s, " {h} {} |", slice.label());
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|".repeat(self.columns.len()));
        s.push('\n');
        for (m, row) in self.models.iter().zip(&self.cells) {
            let _ = write!(s, "| {m} |");
            for c in row {
                match (c.value, c.best) {
                    (Some(v), true) => {
                        let _ = write!(s, " **{v:.4}** |");
                    }
                    (Some(v), false) => {
                        let _ = write!(s, " {v:.4} |");
                    }
                    (None, _) => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
        s.push_str(
            "\nBold marks the best value per column (lowest MAPE/RMSE/MAE, highest R-squared). \
             RMSE >= MAE holds for every row by construction.\n",
        );
        s
    }
}
