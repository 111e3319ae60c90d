//! Command-line front end: typed experiment configurations, the experiment
//! pipelines, deterministic plots and self-describing artifact directories.


// `!(x > 0.0)` is used on purpose so that NaN is rejected along with
// non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plot;

pub use error::{CliError, Result};
pub use experiments::run_experiment;
