//! Run configuration: one flat TOML file of `key = value` lines. Every key is
//! optional and falls back to the default listed in `RunConfig::default`.

use std::path::Path;

use chfrisk::boosting::BoostParams;
use chfrisk::features::FeatureConfig;
use chfrisk::metrics::BootstrapConfig;
use chfrisk::signal::SignalConfig;
use chfrisk::seed;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// How features from several segments of one record are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiSegment {
    /// Mean of the per-segment ECG features.
    Average,
    /// HRV from the concatenated RR series, wave features averaged.
    ConcatRr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream.
    pub seed: u64,

    pub segment_seconds: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub filter_order: usize,
    pub quality_threshold: f64,
    pub multi_segment: MultiSegment,

    pub test_fraction: f64,
    pub cv_folds: usize,
    pub grid_n_trees: Vec<usize>,
    pub grid_max_depth: Vec<usize>,
    pub grid_learning_rate: Vec<f64>,
    pub grid_lambda: Vec<f64>,
    pub grid_alpha: Vec<f64>,
    pub grid_sigma: Vec<f64>,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub subsample: f64,
    pub instance_weighting: bool,
    pub rho: f64,

    /// Horizons in days for the two fixed-time AUCs.
    pub horizon_1: f64,
    pub horizon_2: f64,
    pub n_boot: usize,
    pub level: f64,

    pub shap_background: usize,
    pub kernel_samples: usize,
    pub shap_window: usize,
    pub top_k: usize,
    /// Horizon of the per-patient probability, days.
    pub patient_horizon: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            segment_seconds: 30.0,
            band_low: 0.5,
            band_high: 45.0,
            filter_order: 4,
            quality_threshold: 0.85,
            multi_segment: MultiSegment::Average,
            test_fraction: 0.30,
            cv_folds: 5,
            grid_n_trees: vec![200, 400],
            grid_max_depth: vec![2, 3, 4],
            grid_learning_rate: vec![0.05, 0.1],
            grid_lambda: vec![1.0, 10.0],
            grid_alpha: vec![0.0, 1.0],
            grid_sigma: vec![0.5, 1.0, 1.5, 2.0],
            gamma: 0.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            instance_weighting: true,
            rho: 1.0,
            horizon_1: 365.0,
            horizon_2: 730.0,
            n_boot: 1000,
            level: 0.90,
            shap_background: 100,
            kernel_samples: 2048,
            shap_window: 201,
            top_k: 10,
            patient_horizon: 365.0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Usage(format!("config: {}", msg.into()))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string().replace('\n', " ")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("segment_seconds", self.segment_seconds),
            ("band_low", self.band_low),
            ("band_high", self.band_high),
            ("horizon_1", self.horizon_1),
            ("horizon_2", self.horizon_2),
            ("rho", self.rho),
            ("patient_horizon", self.patient_horizon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let fractions = [
            ("quality_threshold", self.quality_threshold),
            ("test_fraction", self.test_fraction),
            ("level", self.level),
        ];
        for (name, v) in fractions {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        if self.cv_folds < 2 || self.n_boot == 0 || self.shap_background == 0 || self.shap_window == 0 {
            return Err(invalid("cv_folds must be at least 2; n_boot, shap_background and shap_window positive"));
        }
        if self.grid_n_trees.is_empty()
            || self.grid_max_depth.is_empty()
            || self.grid_learning_rate.is_empty()
            || self.grid_lambda.is_empty()
            || self.grid_alpha.is_empty()
            || self.grid_sigma.is_empty()
        {
            return Err(invalid("every grid_* list needs at least one value"));
        }
        for p in self.grid() {
            p.validate().map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn signal(&self) -> SignalConfig {
        SignalConfig {
            segment_seconds: self.segment_seconds,
            band_low: self.band_low,
            band_high: self.band_high,
            filter_order: self.filter_order,
            quality_threshold: self.quality_threshold,
            ..SignalConfig::default()
        }
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig::default()
    }

    pub fn base_params(&self) -> BoostParams {
        BoostParams {
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
            subsample: self.subsample,
            instance_weighting: self.instance_weighting,
            rho: self.rho,
            seed: self.derived("boost", 0),
            ..BoostParams::default()
        }
    }

    /// Cartesian product of the grid lists.
    pub fn grid(&self) -> Vec<BoostParams> {
        let base = self.base_params();
        let mut out = Vec::new();
        for &max_depth in &self.grid_max_depth {
            for &learning_rate in &self.grid_learning_rate {
                for &n_trees in &self.grid_n_trees {
                    for &lambda in &self.grid_lambda {
                        for &alpha in &self.grid_alpha {
                            for &sigma in &self.grid_sigma {
                                out.push(BoostParams { max_depth, learning_rate, n_trees, lambda, alpha, sigma, ..base.clone() });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig { n_boot: self.n_boot, level: self.level, seed: self.derived("bootstrap", 0) }
    }

    /// Seed of a named pipeline stage.
    pub fn derived(&self, stage: &str, index: u64) -> u64 {
        seed::derive(self.seed, stage, index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_round_trip_and_grid_size() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.grid().len(), 192);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::from_toml("test_fraction = 1.5").is_err());
        assert!(RunConfig::from_toml("unknown_key = 3").is_err());
        assert!(RunConfig::from_toml("grid_sigma = []").is_err());
        let c = RunConfig::from_toml("seed = 9\ngrid_n_trees = [10]").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.grid().len(), 96);
    }
}
