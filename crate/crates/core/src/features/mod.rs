//! Interpretable subject features: HRV statistics, mean-cycle wave shape,
//! demographics and clinical history, plus the quantile normalization.

mod dataset;
mod hrv;
mod quantile;
mod wave;

pub use dataset::{assemble_dataset, LabeledSubject, SurvivalDataset};
pub use hrv::{hrv_features, HrvFeatures};
pub use quantile::{quantile_fit, table_position, QuantileTransform};
pub use wave::{mean_cycle, prominent_extremum, wave_features, WaveFeatures, WaveRegions};

use serde::{Deserialize, Serialize};

use crate::signal::CycleEnsemble;
use crate::Result;

pub const HISTORY_NAMES: [&str; 10] = [
    "AF_history",
    "CKD_history",
    "COPD_history",
    "DM_history",
    "HL_history",
    "HTN_history",
    "IHD_history",
    "MI_history",
    "STROKE_history",
    "VHD_history",
];

/// Canonical column order of the feature matrix.
pub const FEATURE_NAMES: [&str; 21] = [
    "age",
    "sex",
    "mean_hr",
    "sdnn",
    "ratio_sd1_sd2",
    "p_timing",
    "q_timing",
    "s_timing",
    "t_timing",
    "q_amplitude",
    "t_amplitude",
    "AF_history",
    "CKD_history",
    "COPD_history",
    "DM_history",
    "HL_history",
    "HTN_history",
    "IHD_history",
    "MI_history",
    "STROKE_history",
    "VHD_history",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

pub fn is_binary_feature(name: &str) -> bool {
    name == "sex" || name.ends_with("_history")
}

pub fn feature_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn binary_mask() -> Vec<bool> {
    FEATURE_NAMES.iter().map(|n| is_binary_feature(n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub regions: WaveRegions,
    /// Population (true) or sample variance for SDNN and Poincare statistics.
    pub population_variance: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { regions: WaveRegions::default(), population_variance: true }
    }
}

/// Features computed from one ECG segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcgFeatures {
    pub mean_hr: f64,
    pub sdnn: f64,
    /// `None` when the Poincare geometry is degenerate.
    pub ratio_sd1_sd2: Option<f64>,
    pub p_timing: f64,
    pub q_timing: f64,
    pub s_timing: f64,
    pub t_timing: f64,
    pub q_amplitude: f64,
    pub t_amplitude: f64,
}

pub fn ecg_features(ensemble: &CycleEnsemble, config: &FeatureConfig) -> Result<EcgFeatures> {
    let hrv = hrv_features(&ensemble.rr_intervals, config.population_variance)?;
    let cycle = mean_cycle(ensemble)?;
    let w = wave_features(&cycle, &config.regions)?;
    Ok(EcgFeatures {
        mean_hr: hrv.mean_hr,
        sdnn: hrv.sdnn,
        ratio_sd1_sd2: hrv.ratio_sd1_sd2().ok(),
        p_timing: w.p_timing,
        q_timing: w.q_timing,
        s_timing: w.s_timing,
        t_timing: w.t_timing,
        q_amplitude: w.q_amplitude,
        t_amplitude: w.t_amplitude,
    })
}

/// Per-field mean over several segments; the ratio averages the defined values.
pub fn average_ecg_features(items: &[EcgFeatures]) -> Option<EcgFeatures> {
    if items.is_empty() {
        return None;
    }
    let n = items.len() as f64;
    let avg = |f: fn(&EcgFeatures) -> f64| items.iter().map(f).sum::<f64>() / n;
    let ratios: Vec<f64> = items.iter().filter_map(|e| e.ratio_sd1_sd2).collect();
    Some(EcgFeatures {
        mean_hr: avg(|e| e.mean_hr),
        sdnn: avg(|e| e.sdnn),
        ratio_sd1_sd2: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
        p_timing: avg(|e| e.p_timing),
        q_timing: avg(|e| e.q_timing),
        s_timing: avg(|e| e.s_timing),
        t_timing: avg(|e| e.t_timing),
        q_amplitude: avg(|e| e.q_amplitude),
        t_amplitude: avg(|e| e.t_amplitude),
    })
}

/// One subject's full feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub age: f64,
    pub sex: bool,
    pub ecg: EcgFeatures,
    /// Flags in [`HISTORY_NAMES`] order.
    pub history: [bool; 10],
}

impl FeatureRow {
    /// Values in [`FEATURE_NAMES`] order; NaN marks a missing value.
    pub fn to_vec(&self) -> Vec<f64> {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        let e = &self.ecg;
        let mut v = vec![
            self.age,
            b(self.sex),
            e.mean_hr,
            e.sdnn,
            e.ratio_sd1_sd2.unwrap_or(f64::NAN),
            e.p_timing,
            e.q_timing,
            e.s_timing,
            e.t_timing,
            e.q_amplitude,
            e.t_amplitude,
        ];
        v.extend(self.history.iter().map(|h| b(*h)));
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        let ratio = v[4];
        let mut history = [false; 10];
        for (h, x) in history.iter_mut().zip(&v[11..21]) {
            *h = *x > 0.5;
        }
        Self {
            age: v[0],
            sex: v[1] > 0.5,
            ecg: EcgFeatures {
                mean_hr: v[2],
                sdnn: v[3],
                ratio_sd1_sd2: (!ratio.is_nan()).then_some(ratio),
                p_timing: v[5],
                q_timing: v[6],
                s_timing: v[7],
                t_timing: v[8],
                q_amplitude: v[9],
                t_amplitude: v[10],
            },
            history,
        }
    }

    /// Names of missing features.
    pub fn missing(&self) -> Vec<&'static str> {
        self.to_vec()
            .iter()
            .zip(FEATURE_NAMES)
            .filter(|(v, _)| v.is_nan())
            .map(|(_, n)| n)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_has_ten_numeric_and_eleven_binary_columns() {
        let mask = binary_mask();
        assert_eq!(mask.iter().filter(|b| **b).count(), 11);
        assert_eq!(mask.iter().filter(|b| !**b).count(), 10);
        assert_eq!(feature_index("t_amplitude"), Some(10));
    }

    #[test]
    fn row_round_trips_through_vec() {
        let row = FeatureRow {
            age: 61.0,
            sex: true,
            ecg: EcgFeatures {
                mean_hr: 72.0,
                sdnn: 0.04,
                ratio_sd1_sd2: None,
                p_timing: 24.0,
                q_timing: 44.0,
                s_timing: 56.0,
                t_timing: 85.0,
                q_amplitude: 0.1,
                t_amplitude: 0.4,
            },
            history: [true, false, false, true, false, false, false, false, false, true],
        };
        let v = row.to_vec();
        assert_eq!(v.len(), N_FEATURES);
        assert_eq!(FeatureRow::from_vec(&v), row);
        assert_eq!(row.missing(), vec!["ratio_sd1_sd2"]);
    }
}
