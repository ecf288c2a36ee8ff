//! Heart failure hospitalization risk from a short single-lead ECG.
//!
//! The crate covers the whole modelling pipeline:
//!
//! - [`signal`]: band-pass filtering, R-peak detection, heart cycle extraction
//!   and segment quality gating.
//! - [`features`]: HRV and wave-shape features, the tabular feature schema and
//!   the quantile normalization fitted on training data.
//! - [`survival`]: log-logistic AFT likelihood, Kaplan-Meier, Cox baseline.
//! - [`boosting`]: gradient-boosted trees trained on the AFT loss.
//! - [`metrics`]: time-dependent concordance, cumulative/dynamic AUC and
//!   bootstrap confidence intervals.
//! - [`explain`]: TreeSHAP, KernelSHAP and a brute-force Shapley oracle.
//! - [`simulate`]: synthetic ECG and synthetic survival cohorts with known
//!   ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boosting;
pub mod error;
pub mod explain;
pub mod features;
pub mod metrics;
pub mod seed;
pub mod signal;
pub mod simulate;
pub mod survival;

pub use error::{Error, Result};
