//! Discrimination metrics for survival predictions: Antolini's time-dependent
//! concordance, cumulative/dynamic AUC at a horizon, its KM-weighted average,
//! and percentile bootstrap intervals over resampled subjects.
//!
//! Every metric has a plain form and a weighted form that takes per-subject
//! multiplicities. The bootstrap uses the weighted form on tables precomputed
//! from the full sample, so a replicate never re-evaluates survival curves.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::survival::{km_estimator_weighted, survival_unchecked, StepFunction, SurvivalLabel};
use crate::{seed, Error, Result};

type CurveFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// Per-subject survival curves.
#[derive(Clone)]
pub enum Curves {
    /// `S_i(t) = 1 / (1 + exp((ln t - tau_i) / sigma))`.
    LogLogistic { tau: Vec<f64>, sigma: f64 },
    /// `S_i(t) = exp(-H0(t) * exp(lp_i))` with `H0` a cumulative hazard step function.
    ProportionalHazards { linear_predictor: Vec<f64>, baseline_cumhaz: StepFunction },
    Custom { n: usize, f: CurveFn },
}

impl std::fmt::Debug for Curves {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Curves::LogLogistic { sigma, tau } => write!(f, "LogLogistic(n={}, sigma={sigma})", tau.len()),
            Curves::ProportionalHazards { linear_predictor, .. } => {
                write!(f, "ProportionalHazards(n={})", linear_predictor.len())
            }
            Curves::Custom { n, .. } => write!(f, "Custom(n={n})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurvivalPredictions {
    pub labels: Vec<SurvivalLabel>,
    pub curves: Curves,
}

impl SurvivalPredictions {
    pub fn new(labels: Vec<SurvivalLabel>, curves: Curves) -> Result<Self> {
        let n = match &curves {
            Curves::LogLogistic { tau, sigma } => {
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
                }
                tau.len()
            }
            Curves::ProportionalHazards { linear_predictor, .. } => linear_predictor.len(),
            Curves::Custom { n, .. } => *n,
        };
        if n != labels.len() {
            return Err(Error::InvalidInput(format!("{n} curves for {} labels", labels.len())));
        }
        Ok(Self { labels, curves })
    }

    pub fn log_logistic(labels: Vec<SurvivalLabel>, tau: Vec<f64>, sigma: f64) -> Result<Self> {
        Self::new(labels, Curves::LogLogistic { tau, sigma })
    }

    pub fn proportional_hazards(
        labels: Vec<SurvivalLabel>,
        linear_predictor: Vec<f64>,
        baseline_cumhaz: StepFunction,
    ) -> Result<Self> {
        Self::new(labels, Curves::ProportionalHazards { linear_predictor, baseline_cumhaz })
    }

    pub fn custom(labels: Vec<SurvivalLabel>, f: impl Fn(usize, f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let n = labels.len();
        Self::new(labels, Curves::Custom { n, f: Arc::new(f) })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `S_i(t)`.
    pub fn survival(&self, i: usize, t: f64) -> f64 {
        match &self.curves {
            Curves::LogLogistic { tau, sigma } => survival_unchecked(t, tau[i], *sigma),
            Curves::ProportionalHazards { linear_predictor, baseline_cumhaz } => {
                (-baseline_cumhaz.value_at(t) * linear_predictor[i].exp()).exp()
            }
            Curves::Custom { f, .. } => f(i, t),
        }
    }

    /// Predictions restricted to (and reindexed by) `idx`; repeated indices
    /// produce repeated subjects.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        let curves = match &self.curves {
            Curves::LogLogistic { tau, sigma } => {
                Curves::LogLogistic { tau: idx.iter().map(|&i| tau[i]).collect(), sigma: *sigma }
            }
            Curves::ProportionalHazards { linear_predictor, baseline_cumhaz } => Curves::ProportionalHazards {
                linear_predictor: idx.iter().map(|&i| linear_predictor[i]).collect(),
                baseline_cumhaz: baseline_cumhaz.clone(),
            },
            Curves::Custom { f, .. } => {
                let (f, map) = (f.clone(), idx.to_vec());
                Curves::Custom { n: idx.len(), f: Arc::new(move |i, t| f(map[i], t)) }
            }
        };
        Self { labels, curves }
    }
}

/// Score of a comparable pair in half units: 2 concordant, 1 tied, 0 discordant.
#[inline]
fn pair_score(s_early: f64, s_late: f64) -> u8 {
    if s_early < s_late {
        2
    } else if s_early == s_late {
        1
    } else {
        0
    }
}

/// A pair (i, j) is comparable when i has an observed event and either fails
/// strictly first, or ties in time with a censored j.
#[inline]
fn comparable(a: &SurvivalLabel, b: &SurvivalLabel) -> bool {
    a.event && (a.time < b.time || (a.time == b.time && !b.event))
}

/// Antolini's time-dependent C-index. A comparable pair is concordant when
/// the earlier failure has the lower predicted survival at its own failure
/// time; equal predicted survival earns half credit.
pub fn antolini_cindex(preds: &SurvivalPredictions) -> Result<f64> {
    let labels = &preds.labels;
    let (mut num, mut den) = (0u64, 0u64);
    for (i, li) in labels.iter().enumerate() {
        if !li.event {
            continue;
        }
        let si = preds.survival(i, li.time);
        for (j, lj) in labels.iter().enumerate() {
            if comparable(li, lj) {
                num += pair_score(si, preds.survival(j, li.time)) as u64;
                den += 2;
            }
        }
    }
    if den == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(num as f64 / den as f64)
}

/// Risk scores `1 - S(horizon)` of cases and controls, sorted by risk.
#[derive(Debug, Clone)]
struct AucTable {
    /// (risk, subject, is_case)
    entries: Vec<(f64, usize, bool)>,
}

impl AucTable {
    fn new(preds: &SurvivalPredictions, horizon: f64) -> Self {
        let mut entries: Vec<(f64, usize, bool)> = preds
            .labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                let case = l.event && l.time <= horizon;
                if case || l.time > horizon {
                    Some((1.0 - preds.survival(i, horizon), i, case))
                } else {
                    None
                }
            })
            .collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { entries }
    }

    /// Weighted `P(risk_case > risk_control)` with ties at one half, or
    /// `None` when either group has zero weight.
    fn eval(&self, w: &[f64]) -> Option<f64> {
        let (mut num, mut controls_below, mut cases) = (0.0, 0.0, 0.0);
        let e = &self.entries;
        let mut k = 0;
        while k < e.len() {
            let (mut cw, mut kw) = (0.0, 0.0);
            let r = e[k].0;
            while k < e.len() && e[k].0 == r {
                if e[k].2 {
                    cw += w[e[k].1];
                } else {
                    kw += w[e[k].1];
                }
                k += 1;
            }
            num += cw * (controls_below + 0.5 * kw);
            controls_below += kw;
            cases += cw;
        }
        if cases > 0.0 && controls_below > 0.0 {
            Some(num / (cases * controls_below))
        } else {
            None
        }
    }
}

/// Cumulative/dynamic AUC at `horizon` without censoring weights: cases failed
/// by the horizon, controls are still under observation after it, and
/// subjects censored at or before the horizon are left out.
pub fn cd_auc(preds: &SurvivalPredictions, horizon: f64) -> Result<f64> {
    AucTable::new(preds, horizon)
        .eval(&vec![1.0; preds.len()])
        .ok_or(Error::NoCasesOrControls(horizon))
}

fn distinct_event_times(labels: &[SurvivalLabel]) -> Vec<f64> {
    let mut t: Vec<f64> = labels.iter().filter(|l| l.event).map(|l| l.time).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Average of `cd_auc` over the observed event times, weighted by the
/// Kaplan-Meier probability mass `S(t-) - S(t)` at each. Event times where
/// the AUC is undefined are dropped and the weights renormalized.
pub fn avg_cd_auc(preds: &SurvivalPredictions) -> Result<f64> {
    Prepared::new(Metric::AvgCdAuc, preds)?
        .eval(&vec![1.0; preds.len()])
        .ok_or(Error::NoCasesOrControls(f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    CIndex,
    CdAuc(f64),
    AvgCdAuc,
}

/// Full-sample tables from which any multiplicity-weighted replicate of a
/// metric is computed.
enum Prepared {
    CIndex {
        /// Per event subject: comparable partners and the pair score.
        pairs: Vec<(usize, Vec<(u32, u8)>)>,
    },
    CdAuc(AucTable),
    AvgCdAuc {
        labels: Vec<SurvivalLabel>,
        times: Vec<f64>,
        tables: Vec<AucTable>,
    },
}

impl Prepared {
    fn new(metric: Metric, preds: &SurvivalPredictions) -> Result<Self> {
        let labels = &preds.labels;
        Ok(match metric {
            Metric::CIndex => {
                let pairs = (0..labels.len())
                    .into_par_iter()
                    .filter(|&i| labels[i].event)
                    .map(|i| {
                        let t = labels[i].time;
                        let si = preds.survival(i, t);
                        let partners = (0..labels.len())
                            .filter(|&j| comparable(&labels[i], &labels[j]))
                            .map(|j| (j as u32, pair_score(si, preds.survival(j, t))))
                            .collect();
                        (i, partners)
                    })
                    .collect();
                Prepared::CIndex { pairs }
            }
            Metric::CdAuc(h) => Prepared::CdAuc(AucTable::new(preds, h)),
            Metric::AvgCdAuc => {
                let times = distinct_event_times(labels);
                if times.is_empty() {
                    return Err(Error::NoEvents);
                }
                let tables = times.par_iter().map(|&t| AucTable::new(preds, t)).collect();
                Prepared::AvgCdAuc { labels: labels.clone(), times, tables }
            }
        })
    }

    fn eval(&self, w: &[f64]) -> Option<f64> {
        match self {
            Prepared::CIndex { pairs } => {
                let (mut num, mut den) = (0.0, 0.0);
                for (i, partners) in pairs {
                    let wi = w[*i];
                    if wi == 0.0 {
                        continue;
                    }
                    let (mut n, mut d) = (0.0, 0.0);
                    for &(j, s) in partners {
                        let wj = w[j as usize];
                        n += wj * s as f64;
                        d += wj;
                    }
                    num += wi * n;
                    den += wi * d;
                }
                (den > 0.0).then(|| num / (2.0 * den))
            }
            Prepared::CdAuc(table) => table.eval(w),
            Prepared::AvgCdAuc { labels, times, tables } => {
                let km = km_estimator_weighted(labels, w);
                let (mut num, mut den) = (0.0, 0.0);
                for (t, table) in times.iter().zip(tables) {
                    let mass = km.value_before(*t) - km.value_at(*t);
                    if mass <= 0.0 {
                        continue;
                    }
                    if let Some(auc) = table.eval(w) {
                        num += mass * auc;
                        den += mass;
                    }
                }
                (den > 0.0).then(|| num / den)
            }
        }
    }
}

/// Metric computed with per-subject multiplicities `weights`.
pub fn weighted_metric(metric: Metric, preds: &SurvivalPredictions, weights: &[f64]) -> Result<Option<f64>> {
    Ok(Prepared::new(metric, preds)?.eval(weights))
}

pub fn metric_value(metric: Metric, preds: &SurvivalPredictions) -> Result<f64> {
    match metric {
        Metric::CIndex => antolini_cindex(preds),
        Metric::CdAuc(h) => cd_auc(preds, h),
        Metric::AvgCdAuc => avg_cd_auc(preds),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { n_boot: 1000, level: 0.90, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Replicates on which the metric was undefined.
    pub undefined: usize,
}

/// Subjects drawn with replacement for replicate `r`.
pub fn resample_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = seed::rng(seed, "bootstrap", r as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Linear-interpolated quantile of sorted values.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn percentile_interval(values: Vec<Option<f64>>, level: f64) -> Result<Interval> {
    let total = values.len();
    let mut ok: Vec<f64> = values.into_iter().flatten().collect();
    let undefined = total - ok.len();
    if ok.is_empty() || undefined * 5 > total {
        return Err(Error::DegenerateBootstrap { undefined, total });
    }
    ok.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Ok(Interval { lo: quantile_sorted(&ok, a), hi: quantile_sorted(&ok, 1.0 - a), undefined })
}

fn check_config(config: &BootstrapConfig) -> Result<()> {
    if config.n_boot == 0 || !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::InvalidInput("bootstrap needs n_boot > 0 and level in (0, 1)".into()));
    }
    Ok(())
}

/// Percentile interval of `metric` over `n_boot` subject resamples.
pub fn bootstrap_ci(metric: Metric, preds: &SurvivalPredictions, config: &BootstrapConfig) -> Result<Interval> {
    check_config(config)?;
    metric_value(metric, preds)?;
    let prepared = Prepared::new(metric, preds)?;
    let n = preds.len();
    let values: Vec<Option<f64>> = (0..config.n_boot)
        .into_par_iter()
        .map(|r| {
            let mut w = vec![0.0; n];
            for i in resample_indices(n, config.seed, r) {
                w[i] += 1.0;
            }
            prepared.eval(&w)
        })
        .collect();
    percentile_interval(values, config.level)
}

/// Same resampling scheme for an arbitrary statistic of the resampled index
/// list; slower, since each replicate is materialized.
pub fn bootstrap_ci_by<F>(n: usize, statistic: F, config: &BootstrapConfig) -> Result<Interval>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    check_config(config)?;
    let values: Vec<Option<f64>> = (0..config.n_boot)
        .into_par_iter()
        .map(|r| statistic(&resample_indices(n, config.seed, r)))
        .collect();
    percentile_interval(values, config.level)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// The four headline discrimination metrics with bootstrap intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub c_index: Estimate,
    pub auc_1y: Estimate,
    pub auc_2y: Estimate,
    pub avg_cd_auc: Estimate,
}

pub fn estimate(metric: Metric, preds: &SurvivalPredictions, config: &BootstrapConfig) -> Result<Estimate> {
    let point = metric_value(metric, preds)?;
    let ci = bootstrap_ci(metric, preds, config)?;
    Ok(Estimate { point, lo: ci.lo, hi: ci.hi })
}

/// C-index, AUC at the two horizons (days) and average c/d AUC.
pub fn metric_report(preds: &SurvivalPredictions, horizons: (f64, f64), config: &BootstrapConfig) -> Result<MetricReport> {
    Ok(MetricReport {
        c_index: estimate(Metric::CIndex, preds, config)?,
        auc_1y: estimate(Metric::CdAuc(horizons.0), preds, config)?,
        auc_2y: estimate(Metric::CdAuc(horizons.1), preds, config)?,
        avg_cd_auc: estimate(Metric::AvgCdAuc, preds, config)?,
    })
}
