//! Rolling evaluation harness, metrics and the epidemic threshold.

pub mod harness;
pub mod metrics;
pub mod report;
pub mod threshold;
pub mod waic;

pub use harness::{nowcast_as_of, rolling_evaluate, AsOfNowcast, Gap, RollingConfig, RollingResult, TrainingWindow, WeekOutcome};
pub use metrics::{
    coverage, log_error, mae, mpi, per_year_table, regime_split, relative_metric, Coverage, IntervalLevel, Regime,
    YearScore, DEFAULT_EPIDEMIC_THRESHOLD, DEFAULT_HIGH_THRESHOLD,
};
pub use report::{build_report, write_errors_csv, write_waic_csv, EvaluationReport, ModelReport, ReportConfig};
pub use threshold::{epidemic_period, epidemic_threshold, seasons_by_epi_year, MemConfig, ThresholdResult};
pub use waic::{waic, waic_from_samples, WaicAccumulator, WaicParts};
