//! Hamilton-style QRS detector.
//!
//! The envelope is |d/dt| of a QRS-band filtered copy of the segment, smoothed
//! by a centered moving average. Envelope maxima that dominate a short
//! neighbourhood are classified as QRS or noise peaks against an adaptive threshold placed between the running QRS and
//! noise peak averages. When the gap since the last beat exceeds a multiple of
//! the running mean RR, the detector searches back for the largest skipped peak
//! above a lowered copy of the threshold it failed. Detections are finally moved to the signal apex.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::filter::SosFilter;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HamiltonConfig {
    /// Band applied before differentiation; `None` differentiates the input as is.
    pub qrs_band: Option<(f64, f64)>,
    pub envelope_ms: f64,
    /// An envelope maximum is a peak only if nothing within this distance exceeds it.
    pub peak_halfwidth_ms: f64,
    pub threshold_coef: f64,
    /// Number of recent peaks in each running average.
    pub history: usize,
    pub refractory_ms: f64,
    pub searchback_rr_factor: f64,
    pub searchback_threshold_factor: f64,
    /// Peaks this close to the previous beat count only if they reach
    /// `twave_ratio` of its envelope peak.
    pub twave_ms: f64,
    pub twave_ratio: f64,
    /// Half-width of the window used to move a detection onto the R apex.
    pub apex_search_ms: f64,
    /// Span used to seed the QRS average.
    pub init_seconds: f64,
}

impl Default for HamiltonConfig {
    fn default() -> Self {
        Self {
            qrs_band: Some((8.0, 16.0)),
            envelope_ms: 80.0,
            peak_halfwidth_ms: 100.0,
            threshold_coef: 0.3125,
            history: 8,
            refractory_ms: 200.0,
            searchback_rr_factor: 1.5,
            searchback_threshold_factor: 0.5,
            twave_ms: 360.0,
            twave_ratio: 0.5,
            apex_search_ms: 80.0,
            init_seconds: 2.0,
        }
    }
}

fn mean(buf: &VecDeque<f64>) -> f64 {
    if buf.is_empty() {
        0.0
    } else {
        buf.iter().sum::<f64>() / buf.len() as f64
    }
}

fn push_bounded(buf: &mut VecDeque<f64>, v: f64, cap: usize) {
    buf.push_back(v);
    while buf.len() > cap {
        buf.pop_front();
    }
}

pub(crate) fn envelope(samples: &[f64], fs: f64, config: &HamiltonConfig) -> Result<Vec<f64>> {
    let base = match config.qrs_band {
        Some((lo, hi)) => SosFilter::butterworth_bandpass(lo, hi, fs, 2)?
            .filtfilt(samples, fs.round() as usize)?,
        None => samples.to_vec(),
    };
    let n = base.len();
    let mut deriv = vec![0.0; n];
    for i in 1..n {
        deriv[i] = (base[i] - base[i - 1]).abs();
    }
    let half = ((config.envelope_ms * 1e-3 * fs).round() as usize / 2).max(1);
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + deriv[i];
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect())
}

struct DetectorState {
    qrs_peaks: VecDeque<f64>,
    noise_peaks: VecDeque<f64>,
    rr: VecDeque<f64>,
    beats: Vec<usize>,
    // rejected peaks since the last accepted beat with the threshold they
    // failed, candidates for search-back
    skipped: Vec<(usize, f64, f64)>,
    history: usize,
    coef: f64,
}

impl DetectorState {
    fn threshold(&self) -> f64 {
        let noise = mean(&self.noise_peaks);
        noise + self.coef * (mean(&self.qrs_peaks) - noise)
    }

    /// A peak shortly after a beat that is much weaker than it is taken for a T wave.
    fn is_twave(&self, idx: usize, value: f64, window: usize, ratio: f64) -> bool {
        match (self.beats.last(), self.qrs_peaks.back()) {
            (Some(&last), Some(&prev)) => idx - last < window && value < ratio * prev,
            _ => false,
        }
    }

    fn accept(&mut self, idx: usize, value: f64) {
        if let Some(&last) = self.beats.last() {
            push_bounded(&mut self.rr, (idx - last) as f64, self.history);
        }
        push_bounded(&mut self.qrs_peaks, value, self.history);
        self.beats.push(idx);
        self.skipped.retain(|&(i, _, _)| i > idx);
    }
}

/// Detect R-peaks in a filtered, [0,1]-scaled segment. Returns ascending sample
/// indices with gaps of at least the refractory period.
pub fn detect_r_peaks(samples: &[f64], fs: f64) -> Result<Vec<usize>> {
    detect_r_peaks_with(samples, fs, &HamiltonConfig::default())
}

pub fn detect_r_peaks_with(samples: &[f64], fs: f64, config: &HamiltonConfig) -> Result<Vec<usize>> {
    if samples.len() < 3 {
        return Err(Error::TooFewPeaks { found: 0 });
    }
    let env = envelope(samples, fs, config)?;
    let n = env.len();
    let refractory = (config.refractory_ms * 1e-3 * fs).round() as usize;
    let twave = (config.twave_ms * 1e-3 * fs).round() as usize;

    let init_len = ((config.init_seconds * fs) as usize).clamp(1, n);
    let init_max = env[..init_len].iter().cloned().fold(0.0, f64::max);

    let mut state = DetectorState {
        qrs_peaks: VecDeque::from(vec![init_max]),
        noise_peaks: VecDeque::new(),
        rr: VecDeque::new(),
        beats: Vec::new(),
        skipped: Vec::new(),
        history: config.history,
        coef: config.threshold_coef,
    };

    let halfwidth = ((config.peak_halfwidth_ms * 1e-3 * fs).round() as usize).max(1);
    for i in 1..n - 1 {
        let dominant = env[i.saturating_sub(halfwidth)..i].iter().all(|&v| v < env[i])
            && env[i + 1..(i + halfwidth + 1).min(n)].iter().all(|&v| v <= env[i]);
        if !dominant {
            continue;
        }
        let value = env[i];

        // search-back for a missed beat before considering this peak
        while let (Some(&last), false) = (state.beats.last(), state.rr.is_empty()) {
            let rr_mean = mean(&state.rr);
            if ((i - last) as f64) <= config.searchback_rr_factor * rr_mean {
                break;
            }
            let factor = config.searchback_threshold_factor;
            let best = state
                .skipped
                .iter()
                .filter(|&&(j, v, thr)| {
                    j >= last + refractory
                        && j + refractory <= i
                        && v > factor * thr
                        && !state.is_twave(j, v, twave, config.twave_ratio)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .copied();
            match best {
                Some((j, v, _)) => state.accept(j, v),
                None => break,
            }
        }

        if let Some(&last) = state.beats.last() {
            if i - last < refractory {
                continue;
            }
        }
        let threshold = state.threshold();
        if value > threshold && !state.is_twave(i, value, twave, config.twave_ratio) {
            state.accept(i, value);
        } else {
            push_bounded(&mut state.noise_peaks, value, config.history);
            state.skipped.push((i, value, threshold));
        }
    }

    let apex = (config.apex_search_ms * 1e-3 * fs).round() as usize;
    let mut peaks: Vec<usize> = Vec::with_capacity(state.beats.len());
    for &b in &state.beats {
        let lo = b.saturating_sub(apex);
        let hi = (b + apex + 1).min(samples.len());
        let mut best = lo;
        for j in lo..hi {
            if samples[j] > samples[best] {
                best = j;
            }
        }
        // an apex on the record edge belongs to a beat outside the record
        if best == 0 || best + 1 == samples.len() {
            continue;
        }
        match peaks.last() {
            Some(&prev) if best <= prev || best - prev < refractory => {
                if samples[best] > samples[prev] {
                    *peaks.last_mut().unwrap() = best;
                    let len = peaks.len();
                    if len >= 2 && peaks[len - 1] - peaks[len - 2] < refractory {
                        peaks.pop();
                    }
                }
            }
            _ => peaks.push(best),
        }
    }

    if peaks.len() < 3 {
        return Err(Error::TooFewPeaks { found: peaks.len() });
    }
    Ok(peaks)
}

/// Beat-level agreement between detections and reference beats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakMatch {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl PeakMatch {
    pub fn f1(&self) -> f64 {
        let tp = 2 * self.true_positives;
        let denom = tp + self.false_positives + self.false_negatives;
        if denom == 0 {
            1.0
        } else {
            tp as f64 / denom as f64
        }
    }
}

/// Pair ascending detections with ascending reference beats, each at most
/// once, when they lie within `tolerance` samples.
pub fn match_peaks(detected: &[usize], reference: &[usize], tolerance: usize) -> PeakMatch {
    let (mut i, mut j, mut tp) = (0, 0, 0);
    while i < detected.len() && j < reference.len() {
        if detected[i].abs_diff(reference[j]) <= tolerance {
            tp += 1;
            i += 1;
            j += 1;
        } else if detected[i] < reference[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    PeakMatch { true_positives: tp, false_positives: detected.len() - tp, false_negatives: reference.len() - tp }
}
