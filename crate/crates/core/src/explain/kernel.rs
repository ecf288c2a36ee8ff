//! Model-agnostic Shapley values: exact enumeration over all coalitions and
//! the weighted least-squares KernelSHAP estimator.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;

use crate::{seed, Error, Result};

pub const MAX_EXACT_FEATURES: usize = 14;

/// Mean of `f` over the background rows with the features in `coalition`
/// taken from `row`.
pub fn coalition_value<F>(f: &F, row: &[f64], background: &[Vec<f64>], coalition: &[bool]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut hybrid = vec![0.0; row.len()];
    let mut sum = 0.0;
    for b in background {
        for j in 0..row.len() {
            hybrid[j] = if coalition[j] { row[j] } else { b[j] };
        }
        sum += f(&hybrid);
    }
    sum / background.len() as f64
}

fn mask_to_coalition(mask: usize, m: usize) -> Vec<bool> {
    (0..m).map(|j| mask >> j & 1 == 1).collect()
}

/// Shapley values of an arbitrary set function over `m` players, by summing
/// marginal contributions over every subset.
pub fn shapley_from_value_fn<V>(m: usize, mut v: V) -> Result<Vec<f64>>
where
    V: FnMut(&[bool]) -> Result<f64>,
{
    if m > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures(m));
    }
    let values: Vec<f64> = (0..1usize << m).map(|mask| v(&mask_to_coalition(mask, m))).collect::<Result<_>>()?;
    // |S|! (m - |S| - 1)! / m!
    let mut factorial = vec![1.0f64; m + 1];
    for k in 1..=m {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..m).map(|s| factorial[s] * factorial[m - s - 1] / factorial[m]).collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        for mask in 0..1usize << m {
            if mask >> i & 1 == 0 {
                let s = mask.count_ones() as usize;
                *p += weight[s] * (values[mask | 1 << i] - values[mask]);
            }
        }
    }
    Ok(phi)
}

/// Exact Shapley values with the background-average value function.
pub fn exact_shapley<F>(f: &F, row: &[f64], background: &[Vec<f64>]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if background.is_empty() {
        return Err(Error::InvalidInput("empty background".into()));
    }
    shapley_from_value_fn(row.len(), |c| Ok(coalition_value(f, row, background, c)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// Coalition budget once full enumeration is out of reach.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { n_samples: 2048, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelShap {
    pub base_value: f64,
    pub prediction: f64,
    pub contributions: Vec<f64>,
    /// Whether every coalition was enumerated.
    pub exact: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a coalition of size `s` out of `m`.
pub fn shapley_kernel(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64)
}

/// Weighted coalitions (excluding the empty and full ones).
fn coalitions(m: usize, config: &KernelConfig) -> (Vec<Vec<bool>>, Vec<f64>, bool) {
    if m <= MAX_EXACT_FEATURES {
        let masks: Vec<usize> = (1..(1usize << m) - 1).collect();
        let weights = masks.iter().map(|&k| shapley_kernel(m, k.count_ones() as usize)).collect();
        return (masks.into_iter().map(|k| mask_to_coalition(k, m)).collect(), weights, true);
    }
    // sizes drawn in proportion to their total kernel mass, each paired with
    // its complement; draws then carry equal weight
    let size_mass: Vec<f64> = (1..m).map(|s| 1.0 / (s * (m - s)) as f64).collect();
    let total: f64 = size_mass.iter().sum();
    let mut rng = seed::rng(config.seed, "kernel_shap", 0);
    let pairs = config.n_samples.div_ceil(2).max(1);
    let mut out = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        let mut u = rng.random::<f64>() * total;
        let mut s = 1;
        for (k, mass) in size_mass.iter().enumerate() {
            s = k + 1;
            if u < *mass {
                break;
            }
            u -= mass;
        }
        let mut c = vec![false; m];
        for j in sample(&mut rng, m, s).into_iter() {
            c[j] = true;
        }
        let complement: Vec<bool> = c.iter().map(|b| !b).collect();
        out.push(c);
        out.push(complement);
    }
    let weights = vec![1.0; out.len()];
    (out, weights, false)
}

/// KernelSHAP: the weighted least-squares fit of coalition values with the
/// constraint that contributions sum to `f(row) - E[f]`, imposed by
/// eliminating the last feature.
pub fn kernel_shap<F>(f: &F, row: &[f64], background: &[Vec<f64>], config: &KernelConfig) -> Result<KernelShap>
where
    F: Fn(&[f64]) -> f64,
{
    let m = row.len();
    if background.is_empty() {
        return Err(Error::InvalidInput("empty background".into()));
    }
    if m == 0 {
        return Err(Error::InvalidInput("no features".into()));
    }
    let base_value = coalition_value(f, row, background, &vec![false; m]);
    let prediction = f(row);
    let delta = prediction - base_value;
    if m == 1 {
        return Ok(KernelShap { base_value, prediction, contributions: vec![delta], exact: true });
    }
    let (zs, weights, exact) = coalitions(m, config);
    let k = m - 1;
    let mut xtwx = DMatrix::<f64>::zeros(k, k);
    let mut xtwy = DVector::<f64>::zeros(k);
    for (z, w) in zs.iter().zip(&weights) {
        let last = f64::from(u8::from(z[m - 1]));
        let y = coalition_value(f, row, background, z) - base_value - last * delta;
        let x: Vec<f64> = (0..k).map(|j| f64::from(u8::from(z[j])) - last).collect();
        for a in 0..k {
            if x[a] == 0.0 {
                continue;
            }
            xtwy[a] += w * x[a] * y;
            for b in 0..k {
                xtwx[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    let solved = xtwx.lu().solve(&xtwy).ok_or(Error::Singular)?;
    let mut contributions: Vec<f64> = solved.iter().copied().collect();
    if contributions.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let rest: f64 = contributions.iter().sum();
    contributions.push(delta - rest);
    Ok(KernelShap { base_value, prediction, contributions, exact })
}
