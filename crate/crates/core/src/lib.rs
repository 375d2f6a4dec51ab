//! Quarter-hourly electricity price forecasting and trading backtests.
//!
//! Pipeline: [`market_data`] ingestion onto a 96-slot Berlin calendar,
//! [`transform`] (median/MAD + `mlog`), [`features`] designs, per-quarter-hour
//! [`estimators`], the rolling [`backtest`], forecast [`evaluation`] and
//! [`portfolio`] strategies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod features;
pub mod market_data;
pub mod portfolio;
pub mod simulate;
pub mod transform;

pub use backtest::{BacktestConfig, ForecastPanel, ModelId, ModelSpec, PanelRow, RollingPlan, WindowPolicy};
pub use error::{Error, ErrorKind, Result};
pub use estimators::{EnConfig, FittedModel, ModelKind};
pub use evaluation::{SdConvention, TestResult};
pub use features::{FeatureSet, FeatureSetKind, Target};
pub use market_data::{Dataset, QhSeries, SeriesId, SLOTS_PER_DAY};
pub use portfolio::{Side, StrategyKind, StrategyLedger};
pub use transform::{FitMode, TransformKind, TransformSpec};
