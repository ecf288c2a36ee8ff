//! From a raw single-lead ECG to quality-gated 30 s segments with located
//! R-peaks and length-100 heart cycles.

mod cycles;
mod detect;
mod filter;

pub use cycles::{extract_cycles, segment_quality, CycleEnsemble, CYCLE_LEN};
pub(crate) use cycles::elementwise_mean;
pub use detect::{detect_r_peaks, detect_r_peaks_with, match_peaks, HamiltonConfig, PeakMatch};
pub use filter::{bandpass_filter, bandpass_filter_order, SosFilter};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub record_id: String,
    pub fs: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub record_id: String,
    pub index: usize,
    pub start_index: usize,
    /// Filtered and scaled to [0, 1].
    pub samples: Vec<f64>,
    pub r_peaks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalConfig {
    pub segment_seconds: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub filter_order: usize,
    pub quality_threshold: f64,
    pub detector: HamiltonConfig,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            segment_seconds: 30.0,
            band_low: 0.5,
            band_high: 45.0,
            filter_order: 4,
            quality_threshold: 0.85,
            detector: HamiltonConfig::default(),
        }
    }
}

/// Affine map onto [0, 1].
pub fn scale_unit(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) || !(hi - lo).is_finite() {
        return Err(Error::FlatSegment);
    }
    let span = hi - lo;
    Ok(samples.iter().map(|v| (v - lo) / span).collect())
}

/// Outcome of running the pipeline on one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport {
    pub index: usize,
    pub start_index: usize,
    pub outcome: std::result::Result<(Segment, CycleEnsemble), Error>,
}

impl SegmentReport {
    pub fn passes(&self, threshold: f64) -> bool {
        matches!(&self.outcome, Ok((_, e)) if e.quality >= threshold)
    }

    pub fn describe(&self) -> String {
        match &self.outcome {
            Ok((_, e)) => format!("segment {}: quality {:.4}", self.index, e.quality),
            Err(err) => format!("segment {}: {err}", self.index),
        }
    }
}

/// filter, scale, detect and cut cycles for one raw segment
pub fn process_segment(
    record_id: &str,
    index: usize,
    start_index: usize,
    raw: &[f64],
    fs: f64,
    config: &SignalConfig,
) -> Result<(Segment, CycleEnsemble)> {
    let filtered = bandpass_filter_order(raw, fs, config.band_low, config.band_high, config.filter_order)?;
    let scaled = scale_unit(&filtered)?;
    let r_peaks = detect_r_peaks_with(&scaled, fs, &config.detector)?;
    let ensemble = extract_cycles(&scaled, &r_peaks, fs)?;
    Ok((
        Segment { record_id: record_id.to_string(), index, start_index, samples: scaled, r_peaks },
        ensemble,
    ))
}

/// Split into whole segments (tail shorter than a segment is dropped) and run
/// the pipeline on each.
pub fn analyze_record(record: &EcgRecord, config: &SignalConfig) -> Result<Vec<SegmentReport>> {
    if !(record.fs > 0.0) {
        return Err(Error::InvalidInput(format!("sampling rate must be positive, got {}", record.fs)));
    }
    let seg_len = (config.segment_seconds * record.fs).round() as usize;
    if seg_len == 0 || record.samples.len() < seg_len {
        return Err(Error::InvalidInput(format!(
            "record `{}` has {} samples, a segment needs {}",
            record.record_id,
            record.samples.len(),
            seg_len
        )));
    }
    Ok(record
        .samples
        .chunks_exact(seg_len)
        .enumerate()
        .map(|(index, raw)| {
            let start_index = index * seg_len;
            SegmentReport {
                index,
                start_index,
                outcome: process_segment(&record.record_id, index, start_index, raw, record.fs, config),
            }
        })
        .collect())
}

/// Draw `count` distinct segments uniformly among those whose quality meets
/// the threshold. Returned in segment order.
pub fn select_segments(
    record: &EcgRecord,
    count: usize,
    config: &SignalConfig,
    seed_value: u64,
) -> Result<Vec<(Segment, CycleEnsemble)>> {
    let reports = analyze_record(record, config)?;
    let mut passing: Vec<SegmentReport> = reports
        .iter()
        .filter(|r| r.passes(config.quality_threshold))
        .cloned()
        .collect();
    if passing.len() < count.max(1) {
        let diagnostics: Vec<String> = reports.iter().map(SegmentReport::describe).collect();
        return Err(Error::NoUsableSegment(format!(
            "{} of {} segments pass (need {}): {}",
            passing.len(),
            reports.len(),
            count.max(1),
            diagnostics.join("; ")
        )));
    }
    let mut rng = seed::rng(seed_value, "select_segment", 0);
    passing.shuffle(&mut rng);
    passing.truncate(count);
    passing.sort_by_key(|r| r.index);
    Ok(passing.into_iter().map(|r| r.outcome.expect("passing segment")).collect())
}

/// One uniformly chosen segment with quality at or above the threshold.
pub fn select_segment(
    record: &EcgRecord,
    config: &SignalConfig,
    seed_value: u64,
) -> Result<(Segment, CycleEnsemble)> {
    Ok(select_segments(record, 1, config, seed_value)?.remove(0))
}
