//! Daily OHLCV ingestion, validation, descriptive statistics and date splits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unparseable or invalid row at data line {line}: {reason}")]
    UnparseableRow { line: usize, reason: String },
    #[error("dates are not strictly increasing at data line {0}")]
    NonMonotonicDates(usize),
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("series is empty")]
    EmptySeries,
    #[error("split boundary {boundary} is outside ({first}, {last})")]
    BoundaryOutOfRange {
        boundary: NaiveDate,
        first: NaiveDate,
        last: NaiveDate,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One trading day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcvRow {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume_from: f64,
    pub volume_to: f64,
}

impl OhlcvRow {
    /// Checks the price/volume invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("prices must be finite and positive".into());
        }
        if !self.volume_from.is_finite() || !self.volume_to.is_finite() {
            return Err("volumes must be finite".into());
        }
        if self.volume_from < 0.0 || self.volume_to < 0.0 {
            return Err("volumes must be non-negative".into());
        }
        if self.low > self.high {
            return Err(format!("low {} > high {}", self.low, self.high));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above open/close", self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below open/close", self.high));
        }
        Ok(())
    }
}

/// Column names used when reading a CSV. Defaults follow the CryptoCompare
/// daily histogram export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub date: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume_from: String,
    pub volume_to: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date: "time".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume_from: "volumefrom".into(),
            volume_to: "volumeto".into(),
        }
    }
}

/// An immutable, validated daily series with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OhlcvSeries {
    rows: Vec<OhlcvRow>,
}

impl OhlcvSeries {
    /// Validates every row and the date ordering.
    pub fn new(rows: Vec<OhlcvRow>) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::EmptySeries);
        }
        for (i, row) in rows.iter().enumerate() {
            row.validate()
                .map_err(|reason| DataError::UnparseableRow { line: i + 1, reason })?;
            if i > 0 && rows[i - 1].date >= row.date {
                return Err(DataError::NonMonotonicDates(i + 1));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[OhlcvRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.rows[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.rows[self.rows.len() - 1].date
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.rows.iter().map(|r| r.date).collect()
    }

    pub fn open(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.open).collect()
    }

    pub fn high(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.high).collect()
    }

    pub fn low(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.low).collect()
    }

    pub fn close(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.close).collect()
    }

    pub fn volume_from(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.volume_from).collect()
    }

    pub fn volume_to(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.volume_to).collect()
    }

    /// Writes the series with the default schema and ISO dates.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let schema = CsvSchema::default();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            &schema.date,
            &schema.open,
            &schema.high,
            &schema.low,
            &schema.close,
            &schema.volume_from,
            &schema.volume_to,
        ])?;
        for r in &self.rows {
            w.write_record(&[
                r.date.format("%Y-%m-%d").to_string(),
                r.open.to_string(),
                r.high.to_string(),
                r.low.to_string(),
                r.close.to_string(),
                r.volume_from.to_string(),
                r.volume_to.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Accepts `YYYY-MM-DD` or an integer Unix timestamp in seconds (the raw
/// CryptoCompare `time` column).
pub fn parse_date(field: &str) -> Option<NaiveDate> {
    let field = field.trim();
    if let Ok(d) = NaiveDate::parse_from_str(field, "%Y-%m-%d") {
        return Some(d);
    }
    let secs: i64 = field.parse().ok()?;
    DateTime::from_timestamp(secs, 0).map(|t| t.date_naive())
}

pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<OhlcvSeries, DataError> {
    read_csv(File::open(path)?, schema)
}

/// Parses a CSV with a header row. Rows are sorted by date after parsing;
/// a repeated date is reported as [`DataError::NonMonotonicDates`].
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<OhlcvSeries, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let idx = [
        col(&schema.date)?,
        col(&schema.open)?,
        col(&schema.high)?,
        col(&schema.low)?,
        col(&schema.close)?,
        col(&schema.volume_from)?,
        col(&schema.volume_to)?,
    ];

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let bad = |reason: String| DataError::UnparseableRow { line, reason };
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let date = parse_date(field(0)).ok_or_else(|| bad(format!("bad date `{}`", field(0))))?;
        let mut nums = [0.0; 6];
        for (k, slot) in nums.iter_mut().enumerate() {
            let raw = field(k + 1);
            *slot = raw
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number `{raw}`")))?;
        }
        let row = OhlcvRow {
            date,
            open: nums[0],
            high: nums[1],
            low: nums[2],
            close: nums[3],
            volume_from: nums[4],
            volume_to: nums[5],
        };
        row.validate().map_err(bad)?;
        rows.push((line, row));
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile);
    }
    rows.sort_by_key(|(_, r)| r.date);
    for pair in rows.windows(2) {
        if pair[0].1.date == pair[1].1.date {
            return Err(DataError::NonMonotonicDates(pair[1].0));
        }
    }
    OhlcvSeries::new(rows.into_iter().map(|(_, r)| r).collect())
}

/// Last training day, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub boundary_date: NaiveDate,
}

/// Splits into `(rows <= boundary, rows > boundary)`. The boundary must lie
/// on or after the first date and strictly before the last, so both halves
/// are non-empty.
pub fn split(
    series: &OhlcvSeries,
    spec: SplitSpec,
) -> Result<(OhlcvSeries, OhlcvSeries), DataError> {
    let b = spec.boundary_date;
    if b < series.first_date() || b >= series.last_date() {
        return Err(DataError::BoundaryOutOfRange {
            boundary: b,
            first: series.first_date(),
            last: series.last_date(),
        });
    }
    let cut = series.rows.partition_point(|r| r.date <= b);
    let (train, test) = series.rows.split_at(cut);
    Ok((
        OhlcvSeries { rows: train.to_vec() },
        OhlcvSeries { rows: test.to_vec() },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation (N-1 denominator); 0 for a single value.
    pub stddev: f64,
}

impl ColumnStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        let stddev = if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
        // The mean of identical values can land one ulp outside [min, max].
        Some(Self {
            min,
            max,
            mean: mean.clamp(min, max),
            stddev,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub open: ColumnStats,
    pub high: ColumnStats,
    pub low: ColumnStats,
    pub close: ColumnStats,
    pub volume_from: ColumnStats,
    pub volume_to: ColumnStats,
}

pub fn describe(series: &OhlcvSeries) -> Result<DescriptiveStats, DataError> {
    let stats = |v: Vec<f64>| ColumnStats::of(&v).ok_or(DataError::EmptySeries);
    Ok(DescriptiveStats {
        open: stats(series.open())?,
        high: stats(series.high())?,
        low: stats(series.low())?,
        close: stats(series.close())?,
        volume_from: stats(series.volume_from())?,
        volume_to: stats(series.volume_to())?,
    })
}
