//! Ground-truth generators: synthetic single-lead ECG with known beats and
//! morphology, and survival cohorts with a known log-time function.

pub mod cohort;
pub mod ecg;

pub use cohort::*;
pub use ecg::*;
