//! Nowcasting of weekly case counts from incrementally reported
//! surveillance data, optionally augmented with online-signal regressors.
//!
//! The pipeline runs: line list → [`triangle::build_triangle`] →
//! [`model::fit`] → [`nowcast::nowcast`], with [`evaluation`] replaying it
//! week by week and [`simulator`] providing synthetic worlds with known truth.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calendar;
pub mod delays;
pub mod error;
pub mod evaluation;
pub mod linelist;
pub mod model;
pub mod nowcast;
pub mod signals;
pub mod simulator;
pub mod stats;
pub mod triangle;

pub use calendar::EpiWeek;
pub use error::{Error, Result};
pub use linelist::{CaseRecord, LineList};
pub use triangle::ReportingTriangle;
