//! Feature specifications and the aligned feature matrix built from them.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::indicators::{self, IndicatorError, MacdPeriods, RollingStat, Windowed};
use crate::market_data::{parse_date, OhlcvSeries};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("series of {len} rows leaves no usable rows for these features (warm-up {warmup}, horizon {horizon})")]
    SeriesTooShort {
        len: usize,
        warmup: usize,
        horizon: usize,
    },
    #[error("duplicate column name `{0}`")]
    DuplicateColumnName(String),
    #[error("feature `{name}`: {source}")]
    Indicator {
        name: String,
        #[source]
        source: IndicatorError,
    },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("malformed feature matrix: {0}")]
    Malformed(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("cache encoding: {0}")]
    Cache(#[from] bincode::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawField {
    Open,
    High,
    Low,
    Close,
    VolumeFrom,
    VolumeTo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IndicatorKind {
    /// A raw series column; uses `aux.field`.
    Raw,
    Sma,
    Ema,
    Wma,
    Atr,
    Ad,
    Cci,
    Roc,
    Mom,
    MacdLine,
    MacdSignal,
    MacdHist,
    BbandsMid,
    BbandsUp,
    BbandsDown,
    StochOsc,
    RollingMean,
    RollingMedian,
    Volatility,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorAux {
    /// Bollinger band multiplier, default 2.
    pub band_k: Option<f64>,
    pub macd: Option<MacdPeriods>,
    pub field: Option<RawField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub kind: IndicatorKind,
    #[serde(default = "one")]
    pub window: usize,
    #[serde(default)]
    pub aux: IndicatorAux,
    /// Column name; derived from kind and window when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

fn one() -> usize {
    1
}

impl IndicatorSpec {
    pub fn new(kind: IndicatorKind, window: usize) -> Self {
        Self {
            kind,
            window,
            aux: IndicatorAux::default(),
            name: None,
        }
    }

    pub fn raw(field: RawField) -> Self {
        Self {
            kind: IndicatorKind::Raw,
            window: 1,
            aux: IndicatorAux {
                field: Some(field),
                ..Default::default()
            },
            name: None,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn column_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        use IndicatorKind::*;
        let w = self.window;
        match self.kind {
            Raw => match self.aux.field.unwrap_or(RawField::Close) {
                RawField::Open => "Open".into(),
                RawField::High => "High".into(),
                RawField::Low => "Low".into(),
                RawField::Close => "Close".into(),
                RawField::VolumeFrom => "volumeF".into(),
                RawField::VolumeTo => "volume".into(),
            },
            Sma => format!("SMA{w}"),
            Ema => format!("EMA{w}"),
            Wma => format!("WMA{w}"),
            Atr => format!("ATR{w}"),
            Ad => "ad".into(),
            Cci => format!("CCI{w}"),
            Roc => format!("ROC{w}"),
            Mom => format!("MOM{w}"),
            MacdLine => "MACDline".into(),
            MacdSignal => "MACDSignalLine".into(),
            MacdHist => "MACDHistogram".into(),
            BbandsMid => format!("SMABollBands{w}"),
            BbandsUp => format!("BBands{w}Up"),
            BbandsDown => format!("BBands{w}Down"),
            StochOsc => format!("stochOSC{w}"),
            RollingMean => format!("meanMW{w}"),
            RollingMedian => format!("medianMW{w}"),
            Volatility => format!("Volatility{w}"),
        }
    }

    /// Computes the column over the whole series.
    pub fn compute(&self, s: &OhlcvSeries) -> Result<Windowed, IndicatorError> {
        use IndicatorKind::*;
        let w = self.window;
        let close = s.close();
        let k = self.aux.band_k.unwrap_or(2.0);
        let periods = self.aux.macd.unwrap_or_default();
        match self.kind {
            Raw => {
                let values = match self.aux.field.unwrap_or(RawField::Close) {
                    RawField::Open => s.open(),
                    RawField::High => s.high(),
                    RawField::Low => s.low(),
                    RawField::Close => close,
                    RawField::VolumeFrom => s.volume_from(),
                    RawField::VolumeTo => s.volume_to(),
                };
                Ok(Windowed { start: 0, values })
            }
            Sma => indicators::sma(&close, w),
            Ema => indicators::ema(&close, w),
            Wma => indicators::wma(&close, w),
            Atr => indicators::atr(&s.high(), &s.low(), &close, w),
            Ad => indicators::ad_line(&s.high(), &s.low(), &close, &s.volume_to()),
            Cci => indicators::cci(&s.high(), &s.low(), &close, w),
            Roc => indicators::roc(&close, w),
            Mom => indicators::mom(&close, w),
            MacdLine => Ok(indicators::macd_with(&close, periods)?.line),
            MacdSignal => Ok(indicators::macd_with(&close, periods)?.signal),
            MacdHist => Ok(indicators::macd_with(&close, periods)?.histogram),
            BbandsMid => Ok(indicators::bollinger(&close, w, k)?.mid),
            BbandsUp => Ok(indicators::bollinger(&close, w, k)?.up),
            BbandsDown => Ok(indicators::bollinger(&close, w, k)?.down),
            StochOsc => indicators::stoch_osc(&s.high(), &s.low(), &close, w),
            RollingMean => indicators::rolling_stat(&close, w, RollingStat::Mean),
            RollingMedian => indicators::rolling_stat(&close, w, RollingStat::Median),
            Volatility => indicators::rolling_stat(&close, w, RollingStat::Volatility),
        }
    }
}

/// Columns used when no specs are given.
pub fn raw_specs() -> Vec<IndicatorSpec> {
    [
        RawField::Open,
        RawField::High,
        RawField::Low,
        RawField::Close,
        RawField::VolumeTo,
    ]
    .into_iter()
    .map(IndicatorSpec::raw)
    .collect()
}

/// The 34 Boruta-confirmed features of the reference Bitcoin study, with
/// their published column names. Windows not stated there (stochOSC, cci,
/// roc, mom, meanMW, medianMW, Volatility) use 14, 20, 10, 10, 20, 20, 20.
pub fn reference_confirmed_specs() -> Vec<IndicatorSpec> {
    use IndicatorKind::*;
    let s = IndicatorSpec::new;
    vec![
        IndicatorSpec::raw(RawField::Low),
        s(StochOsc, 14).named("stochOSC"),
        IndicatorSpec::raw(RawField::High),
        s(Cci, 20).named("cci"),
        s(Wma, 5),
        s(Ema, 5),
        IndicatorSpec::raw(RawField::Open),
        s(BbandsMid, 5),
        s(RollingMean, 20).named("meanMW"),
        s(Sma, 5),
        s(Wma, 50),
        s(RollingMedian, 20).named("medianMW"),
        s(Sma, 50),
        s(Ema, 12),
        s(BbandsMid, 13),
        s(Sma, 13),
        s(Sma, 30),
        s(Ema, 26),
        s(BbandsMid, 20),
        s(Sma, 20),
        s(BbandsUp, 5),
        s(BbandsUp, 20),
        s(BbandsUp, 13),
        s(BbandsDown, 20),
        s(Ema, 50),
        s(MacdHist, 1),
        s(BbandsDown, 5),
        s(MacdLine, 1),
        s(BbandsDown, 13),
        s(Ad, 1),
        s(Volatility, 20).named("Volatility"),
        s(Roc, 10).named("roc"),
        s(MacdSignal, 1),
        s(Mom, 10).named("mom"),
    ]
}

/// The full 37-column candidate set screened by Boruta in the reference study:
/// the confirmed 34 plus `atr`, `volume` and `volumeF`.
pub fn reference_candidate_specs() -> Vec<IndicatorSpec> {
    let mut specs = reference_confirmed_specs();
    specs.push(IndicatorSpec::new(IndicatorKind::Atr, 14).named("atr"));
    specs.push(IndicatorSpec::raw(RawField::VolumeTo));
    specs.push(IndicatorSpec::raw(RawField::VolumeFrom));
    specs
}

/// Row-major feature rows aligned with dates and a target column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub rows: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl FeatureMatrix {
    /// Checks shapes, unique names and finiteness.
    pub fn new(
        column_names: Vec<String>,
        dates: Vec<NaiveDate>,
        rows: Vec<Vec<f64>>,
        target: Vec<f64>,
    ) -> Result<Self, FeatureError> {
        let mut seen = BTreeSet::new();
        for n in &column_names {
            if !seen.insert(n.as_str()) {
                return Err(FeatureError::DuplicateColumnName(n.clone()));
            }
        }
        if dates.len() != rows.len() || target.len() != rows.len() {
            return Err(FeatureError::Malformed(format!(
                "{} dates, {} rows, {} targets",
                dates.len(),
                rows.len(),
                target.len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != column_names.len() {
                return Err(FeatureError::Malformed(format!(
                    "row {i} has {} values for {} columns",
                    r.len(),
                    column_names.len()
                )));
            }
            if let Some(j) = r.iter().position(|v| !v.is_finite()) {
                return Err(FeatureError::NonFinite {
                    column: column_names[j].clone(),
                    row: i,
                });
            }
            if !target[i].is_finite() {
                return Err(FeatureError::NonFinite {
                    column: "target".into(),
                    row: i,
                });
            }
        }
        Ok(Self {
            column_names,
            dates,
            rows,
            target,
        })
    }

    /// Unlabelled matrix for synthetic or in-memory data: dates are
    /// consecutive days from 2000-01-01 and columns are named `x0, x1, ...`.
    pub fn from_xy(rows: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self, FeatureError> {
        let p = rows.first().map_or(0, Vec::len);
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = (0..rows.len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        Self::new((0..p).map(|j| format!("x{j}")).collect(), dates, rows, target)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.column_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|n| n == name)
    }

    /// Row subset in the given order.
    pub fn take_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            column_names: self.column_names.clone(),
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            target: idx.iter().map(|&i| self.target[i]).collect(),
        }
    }

    /// Rows whose date satisfies `keep`.
    pub fn filter_dates(&self, keep: impl Fn(NaiveDate) -> bool) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(self.dates[i])).collect();
        self.take_rows(&idx)
    }

    /// Column subset in the order given.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureMatrix, FeatureError> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| FeatureError::UnknownColumn(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureMatrix {
            column_names: idx.iter().map(|&j| self.column_names[j].clone()).collect(),
            dates: self.dates.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&j| r[j]).collect())
                .collect(),
            target: self.target.clone(),
        })
    }

    /// CSV with header `date,<features...>,target`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.column_names.iter().cloned());
        header.push("target".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = Vec::with_capacity(self.n_features() + 2);
            rec.push(self.dates[i].format("%Y-%m-%d").to_string());
            rec.extend(self.rows[i].iter().map(|v| v.to_string()));
            rec.push(self.target[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<FeatureMatrix, FeatureError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let n = header.len();
        if n < 2 || &header[0] != "date" || &header[n - 1] != "target" {
            return Err(FeatureError::Malformed(
                "header must be `date,<features...>,target`".into(),
            ));
        }
        let names: Vec<String> = header.iter().skip(1).take(n - 2).map(String::from).collect();
        let (mut dates, mut rows, mut target) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| FeatureError::Malformed(format!("line {}: {what}", i + 2));
            dates.push(parse_date(&rec[0]).ok_or_else(|| bad("bad date"))?);
            let nums = rec
                .iter()
                .skip(1)
                .map(|f| f.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<Vec<_>, _>>()?;
            let (feat, t) = nums.split_at(nums.len() - 1);
            rows.push(feat.to_vec());
            target.push(t[0]);
        }
        FeatureMatrix::new(names, dates, rows, target)
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), FeatureError> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<FeatureMatrix, FeatureError> {
        FeatureMatrix::read_csv(BufReader::new(File::open(path)?))
    }
}

/// Builds the nowcasting matrix (target = same-day close).
pub fn build_feature_matrix(
    series: &OhlcvSeries,
    specs: &[IndicatorSpec],
) -> Result<FeatureMatrix, FeatureError> {
    build_feature_matrix_with_horizon(series, specs, 0)
}

/// Row `d` holds the indicator values on day `d` and the close of day
/// `d + horizon` as target. Rows with any undefined value are dropped.
pub fn build_feature_matrix_with_horizon(
    series: &OhlcvSeries,
    specs: &[IndicatorSpec],
    horizon: usize,
) -> Result<FeatureMatrix, FeatureError> {
    let defaults;
    let specs = if specs.is_empty() {
        defaults = raw_specs();
        &defaults[..]
    } else {
        specs
    };
    let names: Vec<String> = specs.iter().map(IndicatorSpec::column_name).collect();
    let mut seen = BTreeSet::new();
    for n in &names {
        if !seen.insert(n) {
            return Err(FeatureError::DuplicateColumnName(n.clone()));
        }
    }
    let n = series.len();
    let columns = specs
        .iter()
        .zip(&names)
        .map(|(s, name)| {
            s.compute(series).map_err(|source| match source {
                IndicatorError::WindowTooLarge { needed, .. } => FeatureError::SeriesTooShort {
                    len: n,
                    warmup: needed - 1,
                    horizon,
                },
                source => FeatureError::Indicator {
                    name: name.clone(),
                    source,
                },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let first = columns.iter().map(|c| c.start).max().unwrap_or(0);
    if first + horizon >= n {
        return Err(FeatureError::SeriesTooShort {
            len: n,
            warmup: first,
            horizon,
        });
    }
    let close = series.close();
    let dates = series.dates();
    let usable = first..n - horizon;
    FeatureMatrix::new(
        names,
        usable.clone().map(|d| dates[d]).collect(),
        usable
            .clone()
            .map(|d| columns.iter().map(|c| c.values[d - c.start]).collect())
            .collect(),
        usable.map(|d| close[d + horizon]).collect(),
    )
}

/// Content hash of the inputs that determine a feature matrix.
pub fn cache_key(series: &OhlcvSeries, specs: &[IndicatorSpec], horizon: usize) -> String {
    let mut h = Sha256::new();
    h.update(bincode::serialize(series).expect("series encodes"));
    h.update(serde_json::to_vec(specs).expect("specs encode"));
    h.update((horizon as u64).to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Directory of bincode-encoded feature matrices keyed by [`cache_key`].
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new<P: Into<PathBuf>>(dir: P) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("features-{key}.bin"))
    }

    pub fn load(&self, key: &str) -> Result<Option<FeatureMatrix>, FeatureError> {
        let path = self.path(key);
        if !path.exists() {
            return Ok(None);
        }
        let m: FeatureMatrix = bincode::deserialize_from(BufReader::new(File::open(path)?))?;
        Ok(Some(m))
    }

    pub fn store(&self, key: &str, m: &FeatureMatrix) -> Result<(), FeatureError> {
        std::fs::create_dir_all(&self.dir)?;
        let mut w = BufWriter::new(File::create(self.path(key))?);
        bincode::serialize_into(&mut w, m)?;
        w.flush()?;
        Ok(())
    }

    /// Returns the cached matrix or builds and stores it.
    pub fn get_or_build(
        &self,
        series: &OhlcvSeries,
        specs: &[IndicatorSpec],
        horizon: usize,
    ) -> Result<FeatureMatrix, FeatureError> {
        let key = cache_key(series, specs, horizon);
        if let Some(m) = self.load(&key)? {
            return Ok(m);
        }
        let m = build_feature_matrix_with_horizon(series, specs, horizon)?;
        self.store(&key, &m)?;
        Ok(m)
    }
}
