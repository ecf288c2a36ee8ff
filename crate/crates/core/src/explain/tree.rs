//! Path-dependent TreeSHAP for the boosted ensemble in log-time space.
//!
//! For every tree the recursion keeps the unique path of split features from
//! the root, together with the fraction of training cover that flows down the
//! path ("zero" fraction) and whether the row itself follows it ("one"
//! fraction). Permutation weights on the path are updated incrementally, so a
//! tree of depth D costs O(L D^2) for L leaves.

use crate::boosting::{AftModel, Tree, TreeNode};
use crate::{Error, Result};

use super::{Explanation, OutputSpace};

#[derive(Debug, Clone, Copy)]
struct PathElem {
    /// `None` for the root sentinel.
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElem { feature, zero, one, weight: if l == 0 { 1.0 } else { 0.0 } });
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / (l + 1) as f64;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / (l + 1) as f64;
    }
}

/// Remove element `k` from the path, undoing its contribution to the weights.
fn unwind(path: &mut Vec<PathElem>, k: usize) {
    let d = path.len() - 1;
    let (one, zero) = (path[k].one, path[k].zero);
    let mut next = path[d].weight;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * (d + 1) as f64 / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (d - i) as f64 / (d + 1) as f64;
        } else {
            path[i].weight = path[i].weight * (d + 1) as f64 / (zero * (d - i) as f64);
        }
    }
    for i in k..d {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

/// Total permutation weight of the path with element `k` unwound.
fn unwound_sum(path: &[PathElem], k: usize) -> f64 {
    let d = path.len() - 1;
    let (one, zero) = (path[k].one, path[k].zero);
    let mut next = path[d].weight;
    let mut total = 0.0;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = next * (d + 1) as f64 / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (d - i) as f64 / (d + 1) as f64;
        } else {
            total += path[i].weight / zero * (d + 1) as f64 / (d - i) as f64;
        }
    }
    total
}

fn cover(tree: &Tree, i: usize) -> f64 {
    tree.nodes[i].cover().expect("covers checked")
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    row: &[f64],
    phi: &mut [f64],
    node: usize,
    parent: &[PathElem],
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    let mut path = parent.to_vec();
    extend(&mut path, zero, one, feature);
    match tree.nodes[node] {
        TreeNode::Leaf { weight, .. } => {
            for k in 1..path.len() {
                let w = unwound_sum(&path, k);
                let f = path[k].feature.expect("only the root lacks a feature");
                phi[f] += w * (path[k].one - path[k].zero) * weight;
            }
        }
        TreeNode::Split { feature: split, left, right, .. } => {
            let hot = Tree::next_node(&tree.nodes[node], row).expect("split node");
            let cold = if hot == left { right } else { left };
            let total = cover(tree, node);
            let (hot_zero, cold_zero) = (cover(tree, hot) / total, cover(tree, cold) / total);
            let (mut in_zero, mut in_one) = (1.0, 1.0);
            if let Some(k) = path.iter().position(|p| p.feature == Some(split)) {
                in_zero = path[k].zero;
                in_one = path[k].one;
                unwind(&mut path, k);
            }
            recurse(tree, row, phi, hot, &path, hot_zero * in_zero, in_one, Some(split));
            recurse(tree, row, phi, cold, &path, cold_zero * in_zero, 0.0, Some(split));
        }
    }
}

/// Cover-weighted mean leaf value.
pub fn tree_expectation(tree: &Tree) -> f64 {
    fn walk(t: &Tree, i: usize) -> f64 {
        match t.nodes[i] {
            TreeNode::Leaf { weight, .. } => weight,
            TreeNode::Split { left, right, .. } => {
                (cover(t, left) * walk(t, left) + cover(t, right) * walk(t, right)) / cover(t, i)
            }
        }
    }
    walk(tree, 0)
}

/// Shapley values of one tree for a transformed row.
pub fn tree_shap_single(tree: &Tree, row: &[f64], n_features: usize) -> Result<Vec<f64>> {
    if !tree.has_covers() {
        return Err(Error::MissingCovers);
    }
    let mut phi = vec![0.0; n_features];
    recurse(tree, row, &mut phi, 0, &[], 1.0, 1.0, None);
    Ok(phi)
}

/// Per-feature contributions to `tau(x)`; `base_value` is the cover-weighted
/// expectation of the ensemble.
pub fn tree_shap(model: &AftModel, row: &[f64]) -> Result<Explanation> {
    let z = model.transform_row(row)?;
    let p = model.n_features();
    let mut contributions = vec![0.0; p];
    let mut base_value = model.base_score;
    for tree in &model.trees {
        let phi = tree_shap_single(tree, &z, p)?;
        for (c, v) in contributions.iter_mut().zip(&phi) {
            *c += model.learning_rate * v;
        }
        base_value += model.learning_rate * tree_expectation(tree);
    }
    Ok(Explanation {
        feature_names: model.feature_names.clone(),
        base_value,
        contributions,
        prediction: model.predict_transformed(&z),
        space: OutputSpace::LogTime,
    })
}

/// Expected ensemble output when only the features in `known` are fixed to
/// the row and the rest follow the training cover at each split. This is the
/// value function whose Shapley values TreeSHAP computes.
pub fn path_expectation(model: &AftModel, transformed_row: &[f64], known: &[bool]) -> Result<f64> {
    fn walk(t: &Tree, i: usize, row: &[f64], known: &[bool]) -> f64 {
        match t.nodes[i] {
            TreeNode::Leaf { weight, .. } => weight,
            TreeNode::Split { feature, left, right, .. } => {
                if known[feature] {
                    walk(t, Tree::next_node(&t.nodes[i], row).expect("split"), row, known)
                } else {
                    (cover(t, left) * walk(t, left, row, known) + cover(t, right) * walk(t, right, row, known))
                        / cover(t, i)
                }
            }
        }
    }
    let mut total = model.base_score;
    for tree in &model.trees {
        if !tree.has_covers() {
            return Err(Error::MissingCovers);
        }
        total += model.learning_rate * walk(tree, 0, transformed_row, known);
    }
    Ok(total)
}
