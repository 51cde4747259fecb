//! Survey orchestration for the arbor pipeline: configuration, log formats,
//! the per-scan loop, metrics and reports.

// Negated comparisons are deliberate: validation must reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod report;

pub use config::PipelineConfig;
pub use error::{EvalError, Result};
pub use pipeline::{run_pipeline, AssociationSummary, RunOutput, SurveyData};
pub use report::RunReport;
