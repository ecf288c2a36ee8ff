//! Log-logistic AFT likelihood, Kaplan-Meier and the Cox baseline model.
//!
//! Times are in days. Under the AFT assumption `ln T = tau(x) + sigma * eps`
//! with `eps` standard logistic, so with `z = (ln t - tau) / sigma`:
//!
//! - survival: `S = 1 / (1 + e^z)`
//! - event NLL: `-(z - 2 ln(1 + e^z)) + ln sigma + ln t`
//! - censored NLL: `ln(1 + e^z)`

mod cox;
mod km;

pub use cox::{cox_fit, cox_survival, CoxConfig, CoxModel};
pub use km::{km_estimator, km_estimator_weighted, StepFunction};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const HESSIAN_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalLabel {
    pub time: f64,
    pub event: bool,
}

impl SurvivalLabel {
    pub fn new(time: f64, event: bool) -> Result<Self> {
        if !(time > 0.0) || !time.is_finite() {
            return Err(Error::InvalidInput(format!("survival time must be positive, got {time}")));
        }
        Ok(Self { time, event })
    }
}

/// Scale of the logistic error term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AftParams {
    pub sigma: f64,
}

impl AftParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    /// Scale whose logistic distribution has the given standard deviation.
    pub fn from_std_dev(std_dev: f64) -> Result<Self> {
        Self::new(std_dev * 3f64.sqrt() / std::f64::consts::PI)
    }
}

/// ln(1 + e^z) without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn standardized(t: f64, tau: f64, sigma: f64) -> f64 {
    (t.ln() - tau) / sigma
}

pub fn loglogistic_survival(t: f64, tau: f64, sigma: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("time must be positive, got {t}")));
    }
    Ok(survival_unchecked(t, tau, sigma))
}

#[inline]
pub(crate) fn survival_unchecked(t: f64, tau: f64, sigma: f64) -> f64 {
    sigmoid(-standardized(t, tau, sigma))
}

pub fn aft_nll(label: &SurvivalLabel, tau: f64, sigma: f64) -> f64 {
    let z = standardized(label.time, tau, sigma);
    if label.event {
        -z + 2.0 * softplus(z) + sigma.ln() + label.time.ln()
    } else {
        softplus(z)
    }
}

/// First and second derivative of [`aft_nll`] with respect to tau, without
/// the hessian floor.
pub fn aft_grad_hess_raw(label: &SurvivalLabel, tau: f64, sigma: f64) -> (f64, f64) {
    let z = standardized(label.time, tau, sigma);
    let p = sigmoid(z);
    let q = sigmoid(-z);
    if label.event {
        ((q - p) / sigma, 2.0 * p * q / (sigma * sigma))
    } else {
        (-p / sigma, p * q / (sigma * sigma))
    }
}

/// Gradient and hessian with the hessian clamped to at least [`HESSIAN_FLOOR`].
pub fn aft_grad_hess(label: &SurvivalLabel, tau: f64, sigma: f64) -> (f64, f64) {
    let (g, h) = aft_grad_hess_raw(label, tau, sigma);
    (g, h.max(HESSIAN_FLOOR))
}

/// Censored subjects weigh 1; events weigh `rho * n_censored / n_events`.
pub fn instance_weights(labels: &[SurvivalLabel], rho: f64) -> Result<Vec<f64>> {
    let events = labels.iter().filter(|l| l.event).count();
    if events == 0 {
        return Err(Error::NoEvents);
    }
    let censored = labels.len() - events;
    if censored == 0 {
        return Err(Error::InvalidInput("instance weighting needs censored subjects".into()));
    }
    let w = rho * censored as f64 / events as f64;
    Ok(labels.iter().map(|l| if l.event { w } else { 1.0 }).collect())
}
