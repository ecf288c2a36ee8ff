//! Zero-phase Butterworth band-pass filtering.

use std::f64::consts::PI;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Biquad>,
}

impl SosFilter {
    /// Butterworth band-pass built as a high-pass at `low` cascaded with a
    /// low-pass at `high`, each of the given (even) order.
    pub fn butterworth_bandpass(low: f64, high: f64, fs: f64, order: usize) -> Result<Self> {
        if !(fs > 0.0) || !low.is_finite() || !high.is_finite() {
            return Err(Error::Filter(format!("fs={fs}, band=({low}, {high})")));
        }
        if fs <= 2.0 * high {
            return Err(Error::Filter(format!(
                "upper cutoff {high} Hz violates Nyquist for fs={fs} Hz"
            )));
        }
        if !(low > 0.0 && low < high) {
            return Err(Error::Filter(format!("need 0 < low < high, got ({low}, {high})")));
        }
        if order == 0 || !order.is_multiple_of(2) {
            return Err(Error::Filter(format!("order must be even and positive, got {order}")));
        }
        let mut sections = Vec::with_capacity(order);
        sections.extend(butterworth_sections(low, fs, order, false));
        sections.extend(butterworth_sections(high, fs, order, true));
        Ok(Self { sections })
    }

    /// Single causal pass with steady-state initial conditions scaled to `x[0]`.
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut level = x[0];
        for s in &self.sections {
            let gain = s.dc_gain();
            // direct form II transposed, state at steady state for a constant input `level`
            let mut z1 = (gain - s.b0) * level;
            let mut z2 = (s.b2 - s.a2 * gain) * level;
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b0 * input + z1;
                z1 = s.b1 * input - s.a1 * out + z2;
                z2 = s.b2 * input - s.a2 * out;
                *v = out;
            }
            level *= gain;
        }
        y
    }

    /// Forward-backward application (zero phase) with odd-reflection padding
    /// of `padlen` samples at both ends.
    pub fn filtfilt(&self, x: &[f64], padlen: usize) -> Result<Vec<f64>> {
        if x.is_empty() {
            return Err(Error::InvalidInput("empty signal".into()));
        }
        let n = x.len();
        let pad = padlen.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        let mut y = self.forward(&ext);
        y.reverse();
        let mut y = self.forward(&y);
        y.reverse();
        Ok(y[pad..pad + n].to_vec())
    }
}

fn butterworth_sections(cutoff: f64, fs: f64, order: usize, lowpass: bool) -> Vec<Biquad> {
    let k = (PI * cutoff / fs).tan();
    let k2 = k * k;
    (1..=order / 2)
        .map(|i| {
            let damping = 2.0 * ((2 * i - 1) as f64 * PI / (2 * order) as f64).sin();
            let norm = 1.0 / (1.0 + damping * k + k2);
            let a1 = 2.0 * (k2 - 1.0) * norm;
            let a2 = (1.0 - damping * k + k2) * norm;
            if lowpass {
                let b0 = k2 * norm;
                Biquad { b0, b1: 2.0 * b0, b2: b0, a1, a2 }
            } else {
                Biquad { b0: norm, b1: -2.0 * norm, b2: norm, a1, a2 }
            }
        })
        .collect()
}

/// 4th-order zero-phase Butterworth band-pass; padding is one second of signal.
pub fn bandpass_filter(samples: &[f64], fs: f64, low: f64, high: f64) -> Result<Vec<f64>> {
    bandpass_filter_order(samples, fs, low, high, 4)
}

pub fn bandpass_filter_order(
    samples: &[f64],
    fs: f64,
    low: f64,
    high: f64,
    order: usize,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let filter = SosFilter::butterworth_bandpass(low, high, fs, order)?;
    filter.filtfilt(samples, fs.round() as usize)
}
