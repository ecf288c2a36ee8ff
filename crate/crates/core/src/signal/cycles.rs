use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CYCLE_LEN: usize = 100;

/// R-centered heart cycles of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleEnsemble {
    pub cycles: Vec<Vec<f64>>,
    pub quality: f64,
    /// Seconds, one per adjacent peak pair.
    pub rr_intervals: Vec<f64>,
}

/// Linear interpolation of `samples` on `len` equally spaced points starting at
/// `start` with spacing `step` (both in sample units).
fn resample(samples: &[f64], start: f64, step: f64, len: usize) -> Vec<f64> {
    let last = samples.len() - 1;
    (0..len)
        .map(|k| {
            let pos = start + k as f64 * step;
            let i = (pos.floor() as usize).min(last);
            let j = (i + 1).min(last);
            let frac = pos - i as f64;
            samples[i] + frac * (samples[j] - samples[i])
        })
        .collect()
}

/// Cut one window per interior R-peak and resample each to 100 points.
///
/// For an interior peak `p` with neighbours `p-` and `p+`, the window has
/// length `L = min(p - p-, p+ - p)` and spans `[p - L/2, p + L/2)`, so the
/// peak lands on index 50 of the resampled cycle.
pub fn extract_cycles(segment: &[f64], r_peaks: &[usize], fs: f64) -> Result<CycleEnsemble> {
    if r_peaks.len() < 3 {
        return Err(Error::TooFewPeaks { found: r_peaks.len() });
    }
    if r_peaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("R-peaks must be strictly increasing".into()));
    }
    let mut cycles = Vec::with_capacity(r_peaks.len() - 2);
    for w in r_peaks.windows(3) {
        let (prev, p, next) = (w[0], w[1], w[2]);
        let len = (p - prev).min(next - p);
        let half = len / 2;
        if half > p || p + half > segment.len() || half == 0 {
            continue;
        }
        let start = p - half;
        let step = 2.0 * half as f64 / CYCLE_LEN as f64;
        cycles.push(resample(segment, start as f64, step, CYCLE_LEN));
    }
    if cycles.is_empty() {
        return Err(Error::NoCycles);
    }
    let rr_intervals = r_peaks.windows(2).map(|w| (w[1] - w[0]) as f64 / fs).collect();
    let quality = if cycles.len() >= 2 { segment_quality(&cycles)? } else { 0.0 };
    Ok(CycleEnsemble { cycles, quality, rr_intervals })
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

pub(crate) fn elementwise_mean(cycles: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; cycles[0].len()];
    for c in cycles {
        for (acc, v) in m.iter_mut().zip(c) {
            *acc += v;
        }
    }
    let n = cycles.len() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// Mean Pearson correlation between each cycle and the mean cycle. A
/// zero-variance operand contributes a correlation of 0.
pub fn segment_quality(cycles: &[Vec<f64>]) -> Result<f64> {
    if cycles.len() < 2 {
        return Err(Error::InvalidInput("segment quality needs at least 2 cycles".into()));
    }
    let template = elementwise_mean(cycles);
    Ok(cycles.iter().map(|c| pearson(c, &template)).sum::<f64>() / cycles.len() as f64)
}
