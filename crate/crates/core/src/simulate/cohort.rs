//! Synthetic survival cohorts with a known log-time location `tau*(x)` and
//! log-logistic noise, censored administratively at a fixed time.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ecg::{EcgGenParams, WaveBump, DEFAULT_WAVES};
use crate::features::{binary_mask, feature_index, feature_names, SurvivalDataset};
use crate::survival::{sigmoid, SurvivalLabel};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectShape {
    /// Additive and linear in every feature.
    Linear,
    /// Saturating T-amplitude effect, U-shaped heart-rate effect and a
    /// kidney-disease effect that only applies above age 65.
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortGenParams {
    pub n: usize,
    pub effect: EffectShape,
    /// Scale of the logistic noise on `ln T`.
    pub sigma_true: f64,
    /// Administrative censoring time, days.
    pub censor_time: f64,
    /// Expected fraction of subjects with an observed event; sets the intercept.
    pub event_rate: f64,
    pub seed: u64,
}

impl Default for CohortGenParams {
    fn default() -> Self {
        Self { n: 1000, effect: EffectShape::Nonlinear, sigma_true: 0.5, censor_time: 1500.0, event_rate: 0.15, seed: 0 }
    }
}

impl CohortGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidInput(format!("cohort needs at least 10 subjects, got {}", self.n)));
        }
        if !(self.censor_time > 0.0) || !(self.sigma_true >= 0.0) {
            return Err(Error::InvalidInput("censor time must be positive and sigma non-negative".into()));
        }
        if !(self.event_rate > 0.0 && self.event_rate < 1.0) {
            return Err(Error::InvalidInput(format!("event rate must be in (0, 1), got {}", self.event_rate)));
        }
        Ok(())
    }
}

/// Prevalence of each clinical history flag, in `HISTORY_NAMES` order.
pub const HISTORY_PREVALENCE: [f64; 10] = [0.095, 0.115, 0.117, 0.179, 0.224, 0.379, 0.177, 0.032, 0.094, 0.069];
pub const MALE_FRACTION: f64 = 0.504;

/// Uniform ranges of the numeric features, in feature order.
pub const NUMERIC_RANGES: [(&str, f64, f64); 10] = [
    ("age", 20.0, 95.0),
    ("mean_hr", 50.0, 110.0),
    ("sdnn", 0.01, 0.10),
    ("ratio_sd1_sd2", 0.2, 1.8),
    ("p_timing", 15.0, 35.0),
    ("q_timing", 41.0, 47.0),
    ("s_timing", 53.0, 59.0),
    ("t_timing", 75.0, 92.0),
    ("q_amplitude", 0.0, 0.2),
    ("t_amplitude", 0.0, 0.8),
];

/// One feature row in canonical order.
pub fn draw_features(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0; feature_names().len()];
    for (name, lo, hi) in NUMERIC_RANGES {
        x[feature_index(name).expect("known feature")] = rng.random_range(lo..hi);
    }
    x[feature_index("sex").expect("sex")] = f64::from(u8::from(rng.random_bool(MALE_FRACTION)));
    let first = feature_index("AF_history").expect("history");
    for (k, p) in HISTORY_PREVALENCE.iter().enumerate() {
        x[first + k] = f64::from(u8::from(rng.random_bool(*p)));
    }
    x
}

/// The generating model: `ln T = tau*(x) + sigma * Logistic(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub effect: EffectShape,
    pub intercept: f64,
    pub sigma: f64,
}

fn f(x: &[f64], name: &str) -> f64 {
    x[feature_index(name).expect("known feature")]
}

impl TrueModel {
    /// `tau*(x) - intercept`.
    pub fn shape(&self, x: &[f64]) -> f64 {
        let (age, hr, t_amp) = (f(x, "age"), f(x, "mean_hr"), f(x, "t_amplitude"));
        let history = -0.5 * f(x, "DM_history") - 0.5 * f(x, "IHD_history") - 0.4 * f(x, "MI_history")
            - 0.3 * f(x, "AF_history")
            - 0.3 * f(x, "sex");
        match self.effect {
            EffectShape::Linear => {
                3.0 * (t_amp - 0.4) - 0.02 * (age - 60.0) - 0.015 * (hr - 80.0) - 0.8 * f(x, "CKD_history") + history
            }
            EffectShape::Nonlinear => {
                let ckd_old = if age > 65.0 { f(x, "CKD_history") } else { 0.0 };
                1.5 * ((t_amp - 0.3) / 0.1).tanh() - 2.4 * ((hr - 80.0) / 30.0).powi(2) - 0.02 * (age - 60.0)
                    - 1.0 * ckd_old
                    + history
            }
        }
    }

    pub fn tau(&self, x: &[f64]) -> f64 {
        self.intercept + self.shape(x)
    }

    /// Probability of an event by `t` given `tau*`.
    fn event_probability(&self, tau: f64, t: f64) -> f64 {
        if self.sigma == 0.0 {
            return f64::from(u8::from(t.ln() >= tau));
        }
        sigmoid((t.ln() - tau) / self.sigma)
    }
}

/// Closed-form `S*(t | x)`.
pub fn true_survival(model: &TrueModel, x: &[f64], t: f64) -> f64 {
    1.0 - model.event_probability(model.tau(x), t)
}

const CALIBRATION_SAMPLE: usize = 20_000;

/// Intercept giving the requested expected event fraction under the
/// feature distribution, by bisection on a fixed Monte Carlo sample.
pub fn true_model(params: &CohortGenParams) -> Result<TrueModel> {
    params.validate()?;
    let mut rng = seed::rng(0, "cohort_calibration", 0);
    let shapes: Vec<f64> = {
        let m = TrueModel { effect: params.effect, intercept: 0.0, sigma: params.sigma_true };
        (0..CALIBRATION_SAMPLE).map(|_| m.shape(&draw_features(&mut rng))).collect()
    };
    let rate = |b: f64| {
        let m = TrueModel { effect: params.effect, intercept: b, sigma: params.sigma_true };
        shapes.iter().map(|s| m.event_probability(b + s, params.censor_time)).sum::<f64>() / shapes.len() as f64
    };
    let (mut lo, mut hi) = (-20.0, 40.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) > params.event_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(TrueModel { effect: params.effect, intercept: 0.5 * (lo + hi), sigma: params.sigma_true })
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub dataset: SurvivalDataset,
    pub true_tau: Vec<f64>,
    /// Uncensored event times.
    pub latent_times: Vec<f64>,
    pub truth: TrueModel,
}

fn logistic(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    (u / (1.0 - u)).ln()
}

pub fn synth_cohort(params: &CohortGenParams) -> Result<SyntheticCohort> {
    let truth = true_model(params)?;
    let subjects: Vec<(Vec<f64>, f64, f64)> = (0..params.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(params.seed, "cohort_subject", i as u64);
            let x = draw_features(&mut rng);
            let tau = truth.tau(&x);
            let t = (tau + truth.sigma * logistic(&mut rng)).exp();
            (x, tau, t)
        })
        .collect();
    let width = params.n.to_string().len();
    let ids = (0..params.n).map(|i| format!("S{i:0width$}")).collect();
    let labels = subjects
        .iter()
        .map(|(_, _, t)| {
            if *t > params.censor_time {
                SurvivalLabel { time: params.censor_time, event: false }
            } else {
                SurvivalLabel { time: *t, event: true }
            }
        })
        .collect();
    let true_tau = subjects.iter().map(|s| s.1).collect();
    let latent_times = subjects.iter().map(|s| s.2).collect();
    let x = subjects.into_iter().map(|s| s.0).collect();
    let dataset = SurvivalDataset::new(ids, feature_names(), binary_mask(), x, labels)?;
    Ok(SyntheticCohort { dataset, true_tau, latent_times, truth })
}

/// ECG generator settings whose extracted features land close to `x`.
///
/// On the [0, 1]-rescaled mean cycle the S trough (raw -0.25) maps to 0 and
/// the R apex (raw 1) to 1, so a rescaled amplitude `a` needs a raw bump of
/// `1.25 a - 0.25`. The Poincare ratio `r` of a stationary AR(1) RR series
/// with lag-one correlation `phi` is `sqrt((1 - phi) / (1 + phi))`.
pub fn subject_ecg_params(x: &[f64], fs: f64, duration_s: f64, noise_std: f64, seed: u64) -> EcgGenParams {
    let r = f(x, "ratio_sd1_sd2");
    let center = |timing: f64| (timing - 50.0) / 100.0;
    let mut waves: [WaveBump; 5] = DEFAULT_WAVES;
    waves[0].center = center(f(x, "p_timing"));
    waves[1].center = center(f(x, "q_timing"));
    waves[1].amplitude = 1.25 * f(x, "q_amplitude") - 0.25;
    waves[3].center = center(f(x, "s_timing"));
    waves[4].center = center(f(x, "t_timing"));
    waves[4].amplitude = 1.25 * f(x, "t_amplitude") - 0.25;
    EcgGenParams {
        fs,
        duration_s,
        mean_hr: f(x, "mean_hr"),
        rr_std: f(x, "sdnn"),
        rr_phi: (1.0 - r * r) / (1.0 + r * r),
        waves,
        t_sign: 1.0,
        noise_std,
        seed,
    }
}
