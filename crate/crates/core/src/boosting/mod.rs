//! Gradient-boosted regression trees for the log-logistic AFT loss.
//!
//! The ensemble estimates `tau(x)`, the location of `ln T`. Each round takes a
//! regularized Newton step per leaf using the per-subject AFT gradient and
//! (floored) hessian, multiplied by the instance weights.

mod cv;
mod io;
mod tree;

pub use cv::{cross_validate, default_grid, stratified_folds, CvResult, CvRow};
pub use io::{load_model, model_from_json, model_to_json, save_model, FORMAT_VERSION};
pub use tree::{grow_tree, leaf_weight, soft_threshold, split_gain, ColumnData, Tree, TreeNode, TreeParams};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::{quantile_fit, QuantileTransform, SurvivalDataset};
use crate::survival::{aft_grad_hess, aft_nll, instance_weights, loglogistic_survival, AftParams, SurvivalLabel};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// L1 penalty on leaf weights.
    pub alpha: f64,
    pub gamma: f64,
    /// Minimum hessian sum in a child.
    pub min_child_weight: f64,
    pub sigma: f64,
    /// Row subsampling fraction per tree; 1 disables it.
    pub subsample: f64,
    pub instance_weighting: bool,
    /// Scale of the event weight.
    pub rho: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            alpha: 0.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            sigma: 1.0,
            subsample: 1.0,
            instance_weighting: true,
            rho: 1.0,
            seed: 0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("boost params: {msg}")));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning rate must be in (0, 1]");
        }
        AftParams::new(self.sigma)?;
        if self.lambda < 0.0 || self.alpha < 0.0 || self.gamma < 0.0 || self.min_child_weight < 0.0 {
            return bad("penalties must be non-negative");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if self.rho <= 0.0 {
            return bad("rho must be positive");
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            lambda: self.lambda,
            alpha: self.alpha,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
        }
    }
}

/// Fitted ensemble: `tau(x) = base_score + learning_rate * sum_k tree_k(q(x))`
/// where `q` is the embedded quantile transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AftModel {
    pub trees: Vec<Tree>,
    pub base_score: f64,
    pub sigma: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub transform: QuantileTransform,
    /// Weighted mean training NLL before the first round and after each round.
    #[serde(default)]
    pub train_loss: Vec<f64>,
}

fn weighted_median(values: &[(f64, f64)]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = v.iter().map(|x| x.1).sum();
    let mut acc = 0.0;
    for (k, &(value, w)) in v.iter().enumerate() {
        acc += w;
        if acc >= total / 2.0 {
            // exactly half: average with the next value, as for an even count
            if (acc - total / 2.0).abs() < 1e-12 * total && k + 1 < v.len() {
                return 0.5 * (value + v[k + 1].0);
            }
            return value;
        }
    }
    v[v.len() - 1].0
}

fn weighted_loss(labels: &[SurvivalLabel], tau: &[f64], weights: &[f64], sigma: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    labels
        .iter()
        .zip(tau)
        .zip(weights)
        .map(|((l, t), w)| w * aft_nll(l, *t, sigma))
        .sum::<f64>()
        / total
}

/// Train on raw (untransformed) features.
pub fn fit(dataset: &SurvivalDataset, params: &BoostParams) -> Result<AftModel> {
    params.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let transform = quantile_fit(&dataset.feature_names, &dataset.binary, &dataset.x)?;
    let rows: Vec<Vec<f64>> = dataset
        .x
        .iter()
        .map(|r| transform.apply(r))
        .collect::<Result<_>>()?;
    let labels = &dataset.labels;
    let weights = if params.instance_weighting {
        instance_weights(labels, params.rho)?
    } else {
        if !labels.iter().any(|l| l.event) {
            return Err(Error::NoEvents);
        }
        vec![1.0; labels.len()]
    };

    let event_times: Vec<(f64, f64)> = labels
        .iter()
        .zip(&weights)
        .filter(|(l, _)| l.event)
        .map(|(l, w)| (l.time, *w))
        .collect();
    let base_score = weighted_median(&event_times).ln();

    let n = rows.len();
    let sigma = params.sigma;
    let data = ColumnData::new(&rows);
    let tree_params = params.tree_params();
    let mut tau = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut train_loss = vec![weighted_loss(labels, &tau, &weights, sigma)];
    let all: Vec<usize> = (0..n).collect();

    for round in 0..params.n_trees {
        for i in 0..n {
            let (g, h) = aft_grad_hess(&labels[i], tau[i], sigma);
            grad[i] = weights[i] * g;
            hess[i] = weights[i] * h;
        }
        let members: Vec<usize> = if params.subsample < 1.0 {
            let mut rng = seed::rng(params.seed, "subsample", round as u64);
            all.iter().copied().filter(|_| rng.random::<f64>() < params.subsample).collect()
        } else {
            all.clone()
        };
        let tree = if members.is_empty() {
            Tree::leaf(0.0, 0.0)
        } else {
            grow_tree(&data, &members, &grad, &hess, &weights, &tree_params)
        };
        for (t, row) in tau.iter_mut().zip(&rows) {
            *t += params.learning_rate * tree.predict(row);
        }
        trees.push(tree);
        train_loss.push(weighted_loss(labels, &tau, &weights, sigma));
    }

    Ok(AftModel {
        trees,
        base_score,
        sigma,
        learning_rate: params.learning_rate,
        feature_names: dataset.feature_names.clone(),
        transform,
        train_loss,
    })
}

impl AftModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// `tau` for a row that has already been quantile transformed.
    pub fn predict_transformed(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.transform.apply(row)
    }
}

/// `tau(x)` for a raw row in the model's feature order.
pub fn predict_tau(model: &AftModel, row: &[f64]) -> Result<f64> {
    Ok(model.predict_transformed(&model.transform_row(row)?))
}

/// `tau(x)` for a raw row given by feature name.
pub fn predict_tau_named(model: &AftModel, row: &[(String, f64)]) -> Result<f64> {
    Ok(model.predict_transformed(&model.transform.apply_named(row)?))
}

pub fn predict_survival(model: &AftModel, row: &[f64], t: f64) -> Result<f64> {
    loglogistic_survival(t, predict_tau(model, row)?, model.sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{binary_mask, feature_names};
    use crate::simulate::{synth_cohort, CohortGenParams, EffectShape};

    fn small_cohort(n: usize, seed: u64) -> SurvivalDataset {
        synth_cohort(&CohortGenParams { n, effect: EffectShape::Nonlinear, seed, ..Default::default() })
            .unwrap()
            .dataset
    }

    #[test]
    fn weighted_median_cases() {
        assert_eq!(weighted_median(&[(3.0, 1.0), (1.0, 1.0), (2.0, 1.0)]), 2.0);
        assert_eq!(weighted_median(&[(3.0, 1.0), (1.0, 1.0), (2.0, 1.0), (4.0, 1.0)]), 2.5);
        assert_eq!(weighted_median(&[(1.0, 1.0), (5.0, 3.0)]), 5.0);
    }

    #[test]
    fn zero_trees_predict_base_score() {
        let ds = small_cohort(200, 1);
        let m = fit(&ds, &BoostParams { n_trees: 0, ..Default::default() }).unwrap();
        let mut times: Vec<f64> = ds.labels.iter().filter(|l| l.event).map(|l| l.time).collect();
        times.sort_by(f64::total_cmp);
        let k = times.len();
        let median = if k % 2 == 1 { times[k / 2] } else { 0.5 * (times[k / 2 - 1] + times[k / 2]) };
        assert!((m.base_score - median.ln()).abs() < 1e-12);
        for row in &ds.x[..10] {
            assert_eq!(predict_tau(&m, row).unwrap(), m.base_score);
        }
    }

    #[test]
    fn single_stump_leaf_is_weighted_newton_step() {
        let ds = small_cohort(150, 2);
        let p = BoostParams { n_trees: 1, max_depth: 0, learning_rate: 1.0, ..Default::default() };
        let m = fit(&ds, &p).unwrap();
        let w = instance_weights(&ds.labels, 1.0).unwrap();
        let (mut g, mut h) = (0.0, 0.0);
        for (l, wi) in ds.labels.iter().zip(&w) {
            let (gi, hi) = aft_grad_hess(l, m.base_score, m.sigma);
            g += wi * gi;
            h += wi * hi;
        }
        let TreeNode::Leaf { weight, .. } = m.trees[0].nodes[0] else { panic!() };
        assert!((weight - (-g / (h + p.lambda))).abs() < 1e-12);
    }

    #[test]
    fn training_loss_decreases() {
        let ds = small_cohort(400, 3);
        let m = fit(&ds, &BoostParams { n_trees: 60, ..Default::default() }).unwrap();
        assert_eq!(m.train_loss.len(), 61);
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn ensemble_sum_matches_independent_walk() {
        let ds = small_cohort(300, 4);
        let m = fit(&ds, &BoostParams { n_trees: 25, max_depth: 3, ..Default::default() }).unwrap();
        for row in ds.x.iter().take(50) {
            let z = m.transform.apply(row).unwrap();
            let mut tau = m.base_score;
            for t in &m.trees {
                let mut idx = 0;
                let w = loop {
                    match t.nodes[idx] {
                        TreeNode::Leaf { weight, .. } => break weight,
                        TreeNode::Split { feature, threshold, left, right, default_left, .. } => {
                            idx = if z[feature].is_nan() {
                                if default_left { left } else { right }
                            } else if z[feature] < threshold {
                                left
                            } else {
                                right
                            };
                        }
                    }
                };
                tau += m.learning_rate * w;
            }
            assert!((predict_tau(&m, row).unwrap() - tau).abs() < 1e-12);
        }
    }

    #[test]
    fn survival_prediction_properties() {
        let ds = small_cohort(200, 5);
        let m = fit(&ds, &BoostParams { n_trees: 10, ..Default::default() }).unwrap();
        let row = &ds.x[0];
        let tau = predict_tau(&m, row).unwrap();
        assert!((predict_survival(&m, row, tau.exp()).unwrap() - 0.5).abs() < 1e-12);
        let mut last = 1.0;
        for t in [1.0, 30.0, 365.0, 730.0, 2000.0] {
            let s = predict_survival(&m, row, t).unwrap();
            assert!(s < last);
            last = s;
        }
        assert!(predict_survival(&m, row, 0.0).is_err());
        let one_year = 1.0 - predict_survival(&m, row, 365.0).unwrap();
        assert!((one_year - (1.0 - 1.0 / (1.0 + ((365f64.ln() - tau) / m.sigma).exp()))).abs() < 1e-12);
    }

    #[test]
    fn monotone_feature_transform_does_not_change_predictions() {
        let ds = small_cohort(300, 6);
        let p = BoostParams { n_trees: 20, ..Default::default() };
        let m = fit(&ds, &p).unwrap();
        let j = 2; // mean_hr
        let mut warped = ds.clone();
        for r in &mut warped.x {
            r[j] = (r[j] / 10.0).powi(3) + 7.0;
        }
        let m2 = fit(&warped, &p).unwrap();
        for (a, b) in ds.x.iter().zip(&warped.x) {
            assert_eq!(predict_tau(&m, a).unwrap(), predict_tau(&m2, b).unwrap());
        }
    }

    #[test]
    fn subject_order_does_not_matter() {
        let ds = small_cohort(250, 7);
        let p = BoostParams { n_trees: 15, ..Default::default() };
        let m = fit(&ds, &p).unwrap();
        let perm: Vec<usize> = (0..ds.len()).rev().collect();
        let shuffled = ds.subset(&perm);
        let m2 = fit(&shuffled, &p).unwrap();
        for row in &ds.x {
            let (a, b) = (predict_tau(&m, row).unwrap(), predict_tau(&m2, row).unwrap());
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn missing_feature_name_is_an_error() {
        let ds = small_cohort(120, 8);
        let m = fit(&ds, &BoostParams { n_trees: 2, ..Default::default() }).unwrap();
        let named: Vec<(String, f64)> = feature_names().into_iter().zip(ds.x[0].clone()).skip(1).collect();
        assert!(matches!(predict_tau_named(&m, &named), Err(Error::MissingFeatures(_))));
        assert_eq!(binary_mask().len(), m.n_features());
    }
}
