//! Command implementations behind the `chfrisk` binary: cohort simulation,
//! feature extraction, training with cross-validation, evaluation against a
//! Cox baseline, the segment-length study and SHAP explanations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
