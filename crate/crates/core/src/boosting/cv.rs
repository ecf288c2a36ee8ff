//! Stratified k-fold cross-validation over a hyperparameter grid.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, BoostParams};
use crate::features::SurvivalDataset;
use crate::metrics::{antolini_cindex, SurvivalPredictions};
use crate::survival::SurvivalLabel;
use crate::{seed, Error, Result};

/// Fold index (0..k) per subject. Events and censored subjects are shuffled
/// separately and dealt round-robin, so each fold gets a near-equal share of
/// both.
pub fn stratified_folds(labels: &[SurvivalLabel], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::InvalidInput(format!("{} subjects for {k} folds", labels.len())));
    }
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for (stratum, event) in [(0u64, true), (1u64, false)] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].event == event).collect();
        idx.shuffle(&mut seed::rng(seed, "cv_folds", stratum));
        for (r, &i) in idx.iter().enumerate() {
            folds[i] = (offset + r) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    for f in 0..k {
        if !(0..labels.len()).any(|i| folds[i] == f && labels[i].event) {
            return Err(Error::EmptyFold(f));
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub params: BoostParams,
    pub fold_cindex: Vec<f64>,
    pub mean_cindex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: BoostParams,
    pub best_index: usize,
    pub rows: Vec<CvRow>,
    pub folds: Vec<usize>,
}

impl CvResult {
    /// One line per candidate: its parameters, per-fold C-index and mean.
    pub fn to_csv(&self) -> String {
        let k = self.rows.first().map_or(0, |r| r.fold_cindex.len());
        let mut out = String::from("candidate,n_trees,max_depth,learning_rate,lambda,alpha,sigma");
        for f in 0..k {
            out.push_str(&format!(",fold{f}"));
        }
        out.push_str(",mean_cindex,best\n");
        for (c, row) in self.rows.iter().enumerate() {
            let p = &row.params;
            out.push_str(&format!(
                "{c},{},{},{},{},{},{}",
                p.n_trees, p.max_depth, p.learning_rate, p.lambda, p.alpha, p.sigma
            ));
            for v in &row.fold_cindex {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{},{}\n", row.mean_cindex, u8::from(c == self.best_index)));
        }
        out
    }
}

/// The documented default search space (192 candidates) around `base`.
pub fn default_grid(base: &BoostParams) -> Vec<BoostParams> {
    let mut grid = Vec::new();
    for max_depth in [2, 3, 4] {
        for learning_rate in [0.05, 0.1] {
            for n_trees in [200, 400] {
                for lambda in [1.0, 10.0] {
                    for alpha in [0.0, 1.0] {
                        for sigma in [0.5, 1.0, 1.5, 2.0] {
                            grid.push(BoostParams { max_depth, learning_rate, n_trees, lambda, alpha, sigma, ..base.clone() });
                        }
                    }
                }
            }
        }
    }
    grid
}

/// Candidates that differ only in `n_trees` share one fit: a model's first
/// `m` trees are exactly the model trained with `n_trees = m`.
fn group_key(p: &BoostParams) -> BoostParams {
    BoostParams { n_trees: 0, ..p.clone() }
}

/// Mean validation Antolini C-index per candidate; the best one wins, with
/// ties going to fewer trees and then shallower trees.
pub fn cross_validate(dataset: &SurvivalDataset, grid: &[BoostParams], k: usize, seed: u64) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty parameter grid".into()));
    }
    for p in grid {
        p.validate()?;
    }
    let folds = stratified_folds(&dataset.labels, k, seed)?;

    let mut groups: Vec<(BoostParams, Vec<usize>)> = Vec::new();
    for (c, p) in grid.iter().enumerate() {
        let key = group_key(p);
        match groups.iter_mut().find(|(g, _)| *g == key) {
            Some((_, members)) => members.push(c),
            None => groups.push((key, vec![c])),
        }
    }

    let jobs: Vec<(usize, usize)> = (0..groups.len()).flat_map(|g| (0..k).map(move |f| (g, f))).collect();
    // (group, fold) -> C-index per member candidate
    let scores: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let (key, members) = &groups[g];
            let train_idx: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
            let val_idx: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
            let train = dataset.subset(&train_idx);
            let val = dataset.subset(&val_idx);
            let max_trees = members.iter().map(|&c| grid[c].n_trees).max().unwrap_or(0);
            let model = fit(&train, &BoostParams { n_trees: max_trees, ..key.clone() })?;
            let rows: Vec<Vec<f64>> = val.x.iter().map(|r| model.transform_row(r)).collect::<Result<_>>()?;

            let mut order: Vec<usize> = members.clone();
            order.sort_by_key(|&c| grid[c].n_trees);
            let mut tau = vec![model.base_score; rows.len()];
            let mut done = 0;
            let mut out = vec![0.0; members.len()];
            for c in order {
                for tree in &model.trees[done..grid[c].n_trees] {
                    for (t, row) in tau.iter_mut().zip(&rows) {
                        *t += model.learning_rate * tree.predict(row);
                    }
                }
                done = grid[c].n_trees;
                let preds = SurvivalPredictions::log_logistic(val.labels.clone(), tau.clone(), model.sigma)?;
                let slot = members.iter().position(|&m| m == c).expect("member");
                out[slot] = antolini_cindex(&preds)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<CvRow> = grid
        .iter()
        .map(|p| CvRow { params: p.clone(), fold_cindex: vec![0.0; k], mean_cindex: 0.0 })
        .collect();
    for (&(g, f), s) in jobs.iter().zip(&scores) {
        for (&c, v) in groups[g].1.iter().zip(s) {
            rows[c].fold_cindex[f] = *v;
        }
    }
    for row in &mut rows {
        row.mean_cindex = row.fold_cindex.iter().sum::<f64>() / k as f64;
    }

    let mut best_index = 0;
    for c in 1..rows.len() {
        let (a, b) = (&rows[c], &rows[best_index]);
        let better = a.mean_cindex > b.mean_cindex
            || (a.mean_cindex == b.mean_cindex
                && (a.params.n_trees, a.params.max_depth) < (b.params.n_trees, b.params.max_depth));
        if better {
            best_index = c;
        }
    }
    Ok(CvResult { best: rows[best_index].params.clone(), best_index, rows, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{synth_cohort, CohortGenParams};

    fn cohort(n: usize) -> SurvivalDataset {
        synth_cohort(&CohortGenParams { n, seed: 12, ..Default::default() }).unwrap().dataset
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let ds = cohort(503);
        let a = stratified_folds(&ds.labels, 5, 1).unwrap();
        assert_eq!(a, stratified_folds(&ds.labels, 5, 1).unwrap());
        assert_ne!(a, stratified_folds(&ds.labels, 5, 2).unwrap());
        let events = ds.event_count();
        for f in 0..5 {
            let size = a.iter().filter(|&&x| x == f).count();
            let ev = (0..ds.len()).filter(|&i| a[i] == f && ds.labels[i].event).count();
            assert!(size.abs_diff(503 / 5) <= 1);
            assert!(ev.abs_diff(events / 5) <= 1);
        }
    }

    #[test]
    fn too_few_events_for_folds_is_an_error() {
        let labels: Vec<SurvivalLabel> =
            (0..20).map(|i| SurvivalLabel { time: 1.0 + i as f64, event: i < 3 }).collect();
        assert!(matches!(stratified_folds(&labels, 5, 0), Err(Error::EmptyFold(_))));
    }

    #[test]
    fn single_candidate_is_selected() {
        let ds = cohort(300);
        let p = BoostParams { n_trees: 20, ..Default::default() };
        let r = cross_validate(&ds, std::slice::from_ref(&p), 3, 0).unwrap();
        assert_eq!(r.best, p);
    }

    #[test]
    fn shared_fits_equal_separate_fits_and_best_is_max() {
        let ds = cohort(300);
        let base = BoostParams { max_depth: 2, ..Default::default() };
        let grid: Vec<BoostParams> = [30, 10, 20]
            .into_iter()
            .flat_map(|n| [1.0, 10.0].map(|lambda| BoostParams { n_trees: n, lambda, ..base.clone() }))
            .collect();
        let r = cross_validate(&ds, &grid, 3, 5).unwrap();
        // recompute one candidate from the stored folds with its own fit
        let c = 2;
        for f in 0..3 {
            let tr: Vec<usize> = (0..ds.len()).filter(|&i| r.folds[i] != f).collect();
            let va: Vec<usize> = (0..ds.len()).filter(|&i| r.folds[i] == f).collect();
            let m = fit(&ds.subset(&tr), &grid[c]).unwrap();
            let val = ds.subset(&va);
            let tau = val.x.iter().map(|x| super::super::predict_tau(&m, x).unwrap()).collect();
            let p = SurvivalPredictions::log_logistic(val.labels.clone(), tau, m.sigma).unwrap();
            assert!((antolini_cindex(&p).unwrap() - r.rows[c].fold_cindex[f]).abs() < 1e-12);
        }
        let best = r.rows[r.best_index].mean_cindex;
        assert!(r.rows.iter().all(|row| row.mean_cindex <= best));
        assert_eq!(r.to_csv().lines().count(), grid.len() + 1);
    }

    #[test]
    fn ties_prefer_fewer_then_shallower_trees() {
        let ds = cohort(200);
        // gamma so large no split is ever taken: every candidate scores the same
        let base = BoostParams { gamma: 1e12, ..Default::default() };
        let grid = vec![
            BoostParams { n_trees: 20, max_depth: 3, ..base.clone() },
            BoostParams { n_trees: 10, max_depth: 4, ..base.clone() },
            BoostParams { n_trees: 10, max_depth: 2, ..base.clone() },
        ];
        let r = cross_validate(&ds, &grid, 2, 0).unwrap();
        assert_eq!(r.best_index, 2);
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(default_grid(&BoostParams::default()).len(), 192);
    }
}
