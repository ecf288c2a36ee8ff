use serde::{Deserialize, Serialize};

use super::SurvivalLabel;

/// Right-continuous step function: `value_at(t)` is the value of the last
/// step at or before `t`, or `initial` before the first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub initial: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|s| *s <= t);
        if k == 0 {
            self.initial
        } else {
            self.values[k - 1]
        }
    }

    /// Value just before `t`.
    pub fn value_before(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|s| *s < t);
        if k == 0 {
            self.initial
        } else {
            self.values[k - 1]
        }
    }
}

pub fn km_estimator(labels: &[SurvivalLabel]) -> StepFunction {
    km_estimator_weighted(labels, &vec![1.0; labels.len()])
}

/// Product-limit estimator with per-subject case weights.
pub fn km_estimator_weighted(labels: &[SurvivalLabel], weights: &[f64]) -> StepFunction {
    let mut order: Vec<usize> = (0..labels.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| labels[a].time.total_cmp(&labels[b].time));
    let mut at_risk: f64 = order.iter().map(|&i| weights[i]).sum();
    let mut s = 1.0;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let t = labels[order[k]].time;
        let (mut deaths, mut leaving) = (0.0, 0.0);
        while k < order.len() && labels[order[k]].time == t {
            let i = order[k];
            if labels[i].event {
                deaths += weights[i];
            }
            leaving += weights[i];
            k += 1;
        }
        if deaths > 0.0 {
            s *= 1.0 - deaths / at_risk;
            times.push(t);
            values.push(s);
        }
        at_risk -= leaving;
    }
    StepFunction { initial: 1.0, times, values }
}
