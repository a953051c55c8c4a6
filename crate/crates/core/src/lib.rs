//! Daily price forecasting from technical indicators.
//!
//! The crate covers ingestion of OHLCV series, indicator feature
//! construction, min-max scaling, Boruta feature selection, three native
//! regression learners, repeated k-fold tuning, stacked generalization and
//! forecast metrics.

pub mod cv;
pub mod evaluation;
pub mod feature_select;
pub mod features;
pub mod indicators;
pub mod learners;
pub mod market_data;
pub mod persist;
pub mod preprocess;
pub mod stacking;
