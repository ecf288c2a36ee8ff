//! Additive feature attributions: TreeSHAP on the ensemble's log-time output,
//! KernelSHAP on the event probability at a horizon, a brute-force Shapley
//! oracle, and the global and per-patient summaries built on them.

mod kernel;
mod tree;

pub use kernel::{
    coalition_value, exact_shapley, kernel_shap, shapley_from_value_fn, shapley_kernel, KernelConfig, KernelShap,
    MAX_EXACT_FEATURES,
};
pub use tree::{path_expectation, tree_expectation, tree_shap, tree_shap_single};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{predict_survival, AftModel};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputSpace {
    /// Contributions to `tau(x)`, the expected log time to event.
    LogTime,
    /// Contributions to `1 - S(horizon | x)`.
    Probability { horizon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub feature_names: Vec<String>,
    pub base_value: f64,
    pub contributions: Vec<f64>,
    pub prediction: f64,
    pub space: OutputSpace,
}

impl Explanation {
    /// `base_value + sum(contributions) - prediction`.
    pub fn local_accuracy_gap(&self) -> f64 {
        self.base_value + self.contributions.iter().sum::<f64>() - self.prediction
    }
}

pub const DEFAULT_WINDOW: usize = 201;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: String,
    /// Mean absolute contribution.
    pub importance: f64,
    /// (raw feature value, contribution) sorted by value.
    pub points: Vec<(f64, f64)>,
    /// Moving median of the contributions along `points`.
    pub moving_median: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub base_value: f64,
    pub window: usize,
    pub features: Vec<FeatureSummary>,
}

impl GlobalSummary {
    /// Features ordered by decreasing importance (ties by name).
    pub fn ranking(&self) -> Vec<&FeatureSummary> {
        let mut r: Vec<&FeatureSummary> = self.features.iter().collect();
        r.sort_by(|a, b| b.importance.total_cmp(&a.importance).then_with(|| a.feature.cmp(&b.feature)));
        r
    }

    pub fn top(&self, k: usize) -> Vec<&FeatureSummary> {
        self.ranking().into_iter().take(k).collect()
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSummary> {
        self.features.iter().find(|f| f.feature == name)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Centered moving median; the window shrinks to what is available at the
/// edges.
pub fn moving_median(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(values.len());
            median(&mut values[lo..hi].to_vec())
        })
        .collect()
}

/// TreeSHAP over every row, aggregated per feature.
pub fn global_summary(model: &AftModel, rows: &[Vec<f64>], window: usize) -> Result<GlobalSummary> {
    if window == 0 || rows.len() < window {
        return Err(Error::InvalidInput(format!("{} rows for a moving-median window of {window}", rows.len())));
    }
    let explanations: Vec<Explanation> = rows.par_iter().map(|r| tree_shap(model, r)).collect::<Result<_>>()?;
    let base_value = explanations[0].base_value;
    let features = model
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut points: Vec<(f64, f64)> =
                rows.iter().zip(&explanations).map(|(r, e)| (r[j], e.contributions[j])).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            let importance = points.iter().map(|p| p.1.abs()).sum::<f64>() / points.len() as f64;
            let shap: Vec<f64> = points.iter().map(|p| p.1).collect();
            FeatureSummary { feature: name.clone(), importance, moving_median: moving_median(&shap, window), points }
        })
        .collect();
    Ok(GlobalSummary { base_value, window, features })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub value: f64,
    /// Training percentile (0-100) of the value; absent for binary features.
    pub percentile: Option<f64>,
    /// In probability points.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientReport {
    pub horizon: f64,
    /// `1 - S(horizon | x)`.
    pub probability: f64,
    pub base_value: f64,
    /// Sorted by decreasing absolute contribution.
    pub contributions: Vec<Contribution>,
    pub exact: bool,
}

/// Seeded draw of at most `size` background rows.
pub fn sample_background(rows: &[Vec<f64>], size: usize, seed: u64) -> Vec<Vec<f64>> {
    if rows.len() <= size {
        return rows.to_vec();
    }
    let mut idx = sample(&mut seed::rng(seed, "shap_background", 0), rows.len(), size).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}

/// Event probability by `horizon` explained with KernelSHAP against raw
/// background rows.
pub fn explain_patient(
    model: &AftModel,
    row: &[f64],
    background: &[Vec<f64>],
    horizon: f64,
    config: &KernelConfig,
) -> Result<PatientReport> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
    }
    let f = |x: &[f64]| 1.0 - predict_survival(model, x, horizon).expect("row width and horizon checked");
    if row.len() != model.n_features() || background.iter().any(|b| b.len() != model.n_features()) {
        return Err(Error::MissingFeatures(format!("rows must have {} values", model.n_features())));
    }
    let ks = kernel_shap(&f, row, background, config)?;
    let mut contributions: Vec<Contribution> = model
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| Contribution {
            feature: name.clone(),
            value: row[j],
            percentile: if row[j].is_nan() { None } else { model.transform.percentile(j, row[j]) },
            contribution: ks.contributions[j],
        })
        .collect();
    contributions.sort_by(|a, b| b.contribution.abs().total_cmp(&a.contribution.abs()));
    Ok(PatientReport {
        horizon,
        probability: ks.prediction,
        base_value: ks.base_value,
        contributions,
        exact: ks.exact,
    })
}
