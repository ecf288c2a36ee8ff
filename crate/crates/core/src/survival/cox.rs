//! Cox proportional hazards fitted by Newton-Raphson on the Breslow partial
//! likelihood, with step halving and a Breslow baseline cumulative hazard.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{StepFunction, SurvivalLabel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxConfig {
    pub max_iter: usize,
    /// Convergence when the gradient infinity norm drops below this.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for CoxConfig {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-9, max_halvings: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Breslow estimate of the baseline cumulative hazard at x = 0.
    pub baseline_cumhaz: StepFunction,
    pub feature_names: Vec<String>,
    /// Partial log-likelihood after each accepted Newton step (index 0 is the start).
    pub log_likelihood: Vec<f64>,
}

struct Derivatives {
    loglik: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Subjects sorted by descending time, grouped so that every distinct time
/// forms one block.
fn descending_blocks(labels: &[SurvivalLabel]) -> (Vec<usize>, Vec<std::ops::Range<usize>>) {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[b].time.total_cmp(&labels[a].time));
    let mut blocks = Vec::new();
    let mut start = 0;
    for k in 1..=order.len() {
        if k == order.len() || labels[order[k]].time != labels[order[start]].time {
            blocks.push(start..k);
            start = k;
        }
    }
    (order, blocks)
}

fn partial_likelihood(
    x: &[Vec<f64>],
    labels: &[SurvivalLabel],
    beta: &DVector<f64>,
    order: &[usize],
    blocks: &[std::ops::Range<usize>],
    with_derivatives: bool,
) -> Derivatives {
    let p = beta.len();
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(p);
    let mut s2 = DMatrix::zeros(p, p);
    let mut loglik = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    for block in blocks {
        for &i in &order[block.clone()] {
            let xi = DVector::from_column_slice(&x[i]);
            let r = xi.dot(beta).exp();
            s0 += r;
            if with_derivatives {
                s1.axpy(r, &xi, 1.0);
                s2.ger(r, &xi, &xi, 1.0);
            }
        }
        for &i in &order[block.clone()] {
            if !labels[i].event {
                continue;
            }
            let xi = DVector::from_column_slice(&x[i]);
            loglik += xi.dot(beta) - s0.ln();
            if with_derivatives {
                let mean = &s1 / s0;
                grad += &xi - &mean;
                hess -= &s2 / s0 - &mean * mean.transpose();
            }
        }
    }
    Derivatives { loglik, grad, hess }
}

fn breslow_baseline(x: &[Vec<f64>], labels: &[SurvivalLabel], beta: &[f64]) -> StepFunction {
    let (order, blocks) = descending_blocks(labels);
    let risk: Vec<f64> = x
        .iter()
        .map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp())
        .collect();
    let mut s0 = 0.0;
    let mut increments = Vec::new();
    for block in &blocks {
        let mut deaths = 0.0;
        for &i in &order[block.clone()] {
            s0 += risk[i];
            if labels[i].event {
                deaths += 1.0;
            }
        }
        if deaths > 0.0 {
            increments.push((labels[order[block.start]].time, deaths / s0));
        }
    }
    increments.reverse();
    let mut cum = 0.0;
    let mut times = Vec::with_capacity(increments.len());
    let mut values = Vec::with_capacity(increments.len());
    for (t, d) in increments {
        cum += d;
        times.push(t);
        values.push(cum);
    }
    StepFunction { initial: 0.0, times, values }
}

pub fn cox_fit(
    x: &[Vec<f64>],
    labels: &[SurvivalLabel],
    feature_names: &[String],
    config: &CoxConfig,
) -> Result<CoxModel> {
    let n = x.len();
    let p = feature_names.len();
    if n != labels.len() || x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidInput("design matrix and labels disagree in shape".into()));
    }
    if n <= p {
        return Err(Error::InvalidInput(format!("need more subjects ({n}) than features ({p})")));
    }
    if !labels.iter().any(|l| l.event) {
        return Err(Error::NoEvents);
    }
    for (j, name) in feature_names.iter().enumerate() {
        if x.iter().any(|r| !r[j].is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value in column `{name}`")));
        }
        if x.iter().all(|r| r[j] == x[0][j]) {
            return Err(Error::ConstantFeature(name.clone()));
        }
    }

    // center columns; beta is unchanged by the shift
    let means: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect();

    let (order, blocks) = descending_blocks(labels);
    let mut beta = DVector::zeros(p);
    let mut current = partial_likelihood(&centered, labels, &beta, &order, &blocks, true);
    let mut history = vec![current.loglik];
    let mut converged = false;

    for _ in 0..config.max_iter {
        if current.grad.amax() < config.tol {
            converged = true;
            break;
        }
        let information = -current.hess.clone();
        let chol = information.clone().cholesky().ok_or(Error::Singular)?;
        let step = chol.solve(&current.grad);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let candidate = &beta + &step * scale;
            let trial = partial_likelihood(&centered, labels, &candidate, &order, &blocks, false);
            if trial.loglik.is_finite() && trial.loglik >= current.loglik {
                accepted = Some(candidate);
                break;
            }
            scale *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(Error::NotConverged(history.len()));
        };
        beta = next;
        current = partial_likelihood(&centered, labels, &beta, &order, &blocks, true);
        history.push(current.loglik);
    }
    if !converged && current.grad.amax() >= config.tol {
        return Err(Error::NotConverged(config.max_iter));
    }

    let information = -current.hess.clone();
    let inverse = information.cholesky().ok_or(Error::Singular)?.inverse();
    let std_errors = (0..p).map(|j| inverse[(j, j)].max(0.0).sqrt()).collect();
    let beta: Vec<f64> = beta.iter().copied().collect();
    let baseline_cumhaz = breslow_baseline(x, labels, &beta);
    Ok(CoxModel {
        beta,
        std_errors,
        baseline_cumhaz,
        feature_names: feature_names.to_vec(),
        log_likelihood: history,
    })
}

impl CoxModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
    }
}

/// `S(t | x) = exp(-Lambda0(t) * e^{beta'x})`.
pub fn cox_survival(model: &CoxModel, x: &[f64], t: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::InvalidInput(format!("time must be non-negative, got {t}")));
    }
    Ok((-model.baseline_cumhaz.value_at(t) * model.linear_predictor(x).exp()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn l(time: f64, event: bool) -> SurvivalLabel {
        SurvivalLabel { time, event }
    }

    #[test]
    fn zero_column_is_rejected() {
        let x = vec![vec![0.0]; 5];
        let labels: Vec<_> = (1..=5).map(|t| l(t as f64, true)).collect();
        assert!(matches!(
            cox_fit(&x, &labels, &["z".into()], &CoxConfig::default()),
            Err(Error::ConstantFeature(_))
        ));
    }

    #[test]
    fn no_discrimination_gives_zero_beta() {
        // group 0 and group 1 have the same event times
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for t in [1.0, 2.0, 3.0, 4.0, 5.0] {
            for g in [0.0, 1.0] {
                x.push(vec![g]);
                labels.push(l(t, t != 5.0));
            }
        }
        let m = cox_fit(&x, &labels, &["g".into()], &CoxConfig::default()).unwrap();
        assert!(m.beta[0].abs() < 1e-8, "{}", m.beta[0]);
    }

    #[test]
    fn three_subject_case_matches_grid_search() {
        // times 1, 2, 3 all events with x = 1, 0, 1:
        // L(b) = e^b / (2 e^b + 1) * 1 / (1 + e^b), maximized at e^b = 1/sqrt(2)
        let x = vec![vec![1.0], vec![0.0], vec![1.0]];
        let labels = vec![l(1.0, true), l(2.0, true), l(3.0, true)];
        let lik = |b: f64| b - (2.0 * b.exp() + 1.0).ln() - (1.0 + b.exp()).ln();
        let grid_best = (-20000..=20000)
            .map(|k| k as f64 * 1e-4)
            .max_by(|a, b| lik(*a).total_cmp(&lik(*b)))
            .unwrap();
        let m = cox_fit(&x, &labels, &["x".into()], &CoxConfig::default()).unwrap();
        assert!((m.beta[0] - grid_best).abs() < 1e-4);
        assert!((m.beta[0] + 0.5 * 2f64.ln()).abs() < 1e-8, "{}", m.beta[0]);
    }

    #[test]
    fn recovers_planted_coefficients() {
        let truth = [0.8, -0.5, 0.3];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let n = 2000;
        let mut x = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let rate = row.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>().exp() * 0.01;
            let u: f64 = rng.random();
            let t = -u.ln() / rate;
            let c = 150.0;
            labels.push(if t < c { l(t, true) } else { l(c, false) });
            x.push(row);
        }
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let m = cox_fit(&x, &labels, &names, &CoxConfig::default()).unwrap();
        for (j, t) in truth.iter().enumerate() {
            assert!(
                (m.beta[j] - t).abs() < 3.0 * m.std_errors[j],
                "beta {j}: {} vs {} (se {})",
                m.beta[j],
                t,
                m.std_errors[j]
            );
        }
        assert!(m.log_likelihood.windows(2).all(|w| w[1] >= w[0]));

        // shifting a column leaves the ordering of linear predictors unchanged
        let shifted: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] + 5.0, r[1], r[2]]).collect();
        let m2 = cox_fit(&shifted, &labels, &names, &CoxConfig::default()).unwrap();
        let mut o1: Vec<usize> = (0..n).collect();
        let mut o2 = o1.clone();
        o1.sort_by(|&a, &b| m.linear_predictor(&x[a]).total_cmp(&m.linear_predictor(&x[b])));
        o2.sort_by(|&a, &b| m2.linear_predictor(&shifted[a]).total_cmp(&m2.linear_predictor(&shifted[b])));
        assert_eq!(o1, o2);

        for row in x.iter().take(20) {
            let mut last = 1.0;
            for t in [0.0, 1.0, 10.0, 50.0, 100.0, 149.0] {
                let s = cox_survival(&m, row, t).unwrap();
                assert!(s <= last);
                last = s;
            }
        }
        let t0 = m.baseline_cumhaz.times[0];
        assert_eq!(cox_survival(&m, &x[0], t0 * 0.5).unwrap(), 1.0);
        let s0 = cox_survival(&m, &[0.0, 0.0, 0.0], 100.0).unwrap();
        assert!((s0 - (-m.baseline_cumhaz.value_at(100.0)).exp()).abs() < 1e-15);
        assert!(cox_survival(&m, &x[0], -1.0).is_err());
    }

    #[test]
    fn separable_data_diverges_or_errors() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let labels: Vec<_> = (0..6).map(|i| l(10.0 - i as f64, true)).collect();
        match cox_fit(&x, &labels, &["x".into()], &CoxConfig { max_iter: 30, ..Default::default() }) {
            Ok(m) => assert!(m.beta[0] > 5.0, "{}", m.beta[0]),
            Err(e) => assert!(matches!(e, Error::NotConverged(_) | Error::Singular), "{e:?}"),
        }
    }
}
