//! Non-regression testing for time-stepping simulation codes.
//!
//! Compare growth-rate time series of a run against a stored reference,
//! plan and launch reference scenarios, extract timers from run logs and
//! keep a small database of reference runs with machine descriptions.

// `!(x > 0.0)` style checks are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchstore;
pub mod kv;
pub mod metric;
pub mod numfmt;
pub mod scenario;
pub mod timers;
pub mod timeseries;
pub mod toysim;

pub use metric::{compare, relative_difference, render_report, ComparisonReport, MetricSpec, Verdict};
pub use timeseries::{parse_macroscopic, MacroscopicSeries, Quantity};
