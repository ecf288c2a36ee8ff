use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed;

/// RR interval (s) at which template widths are exact fractions of the beat.
pub const REFERENCE_RR: f64 = 0.8;

/// One Gaussian component of the beat template. The center is a fraction of
/// the local RR interval relative to the R apex; the width is a fraction at
/// [`REFERENCE_RR`] and grows with the square root of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveBump {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgGenParams {
    pub fs: f64,
    pub duration_s: f64,
    pub mean_hr: f64,
    /// Target standard deviation of RR intervals, seconds.
    pub rr_std: f64,
    /// Lag-one autocorrelation of the log-RR process; sets the Poincare ratio.
    pub rr_phi: f64,
    /// P, Q, R, S, T in that order.
    pub waves: [WaveBump; 5],
    pub t_sign: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for EcgGenParams {
    fn default() -> Self {
        Self {
            fs: 250.0,
            duration_s: 30.0,
            mean_hr: 60.0,
            rr_std: 0.03,
            rr_phi: 0.5,
            waves: DEFAULT_WAVES,
            t_sign: 1.0,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

pub const DEFAULT_WAVES: [WaveBump; 5] = [
    WaveBump { center: -0.25, width: 0.025, amplitude: 0.15 },
    WaveBump { center: -0.06, width: 0.012, amplitude: -0.15 },
    WaveBump { center: 0.0, width: 0.012, amplitude: 1.0 },
    WaveBump { center: 0.06, width: 0.012, amplitude: -0.25 },
    WaveBump { center: 0.35, width: 0.045, amplitude: 0.3 },
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEcg {
    pub samples: Vec<f64>,
    /// Sample indices of every R apex inside the record.
    pub r_peaks: Vec<usize>,
    /// Fractional sample positions of P, Q, R, S, T for each beat in `r_peaks`.
    pub wave_centers: Vec<[f64; 5]>,
    /// Noise-free signal.
    pub clean: Vec<f64>,
}

/// Lognormal RR series: log RR follows a stationary AR(1) around ln(60/hr).
pub fn rr_series(params: &EcgGenParams, count: usize) -> Vec<f64> {
    let mut rng = seed::rng(params.seed, "ecg_rr", 0);
    let mean_rr = 60.0 / params.mean_hr;
    let s = (params.rr_std / mean_rr).max(0.0);
    let phi = params.rr_phi.clamp(-0.99, 0.99);
    let innovation = s * (1.0 - phi * phi).sqrt();
    let mut a: f64 = s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    (0..count)
        .map(|k| {
            if k > 0 {
                let z: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                a = phi * a + innovation * z;
            }
            mean_rr * (a - s * s / 2.0).exp()
        })
        .collect()
}

pub fn synth_ecg(params: &EcgGenParams) -> SyntheticEcg {
    let fs = params.fs;
    let n = (params.duration_s * fs).round() as usize;
    let mean_rr = 60.0 / params.mean_hr;
    let beats_needed = (params.duration_s / mean_rr * 1.5).ceil() as usize + 4;
    let rr = rr_series(params, beats_needed);

    // beat times in seconds, the first one placed before the record starts
    let mut times = Vec::with_capacity(beats_needed);
    let mut t = -0.6 * mean_rr;
    for r in &rr {
        times.push(t);
        t += r;
        if t > params.duration_s + mean_rr {
            break;
        }
    }

    // wave offsets scale with the shorter neighbouring RR gap, widths with its square root
    let local_rr: Vec<f64> = (0..times.len())
        .map(|k| match (k.checked_sub(1).map(|j| times[k] - times[j]), times.get(k + 1).map(|t| t - times[k])) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => mean_rr,
        })
        .collect();

    let mut clean = vec![0.0; n];
    for (&tb, &lrr) in times.iter().zip(&local_rr) {
        for (w, bump) in params.waves.iter().enumerate() {
            let amp = if w == 4 { bump.amplitude * params.t_sign } else { bump.amplitude };
            let center = (tb + bump.center * lrr) * fs;
            let sd = bump.width * (REFERENCE_RR * lrr).sqrt() * fs;
            let lo = (center - 6.0 * sd).floor().max(0.0) as usize;
            let hi = ((center + 6.0 * sd).ceil().max(0.0) as usize).min(n);
            for (i, v) in clean.iter_mut().enumerate().take(hi).skip(lo) {
                let d = (i as f64 - center) / sd;
                *v += amp * (-0.5 * d * d).exp();
            }
        }
    }

    let mut r_peaks = Vec::new();
    let mut wave_centers = Vec::new();
    for (&tb, &lrr) in times.iter().zip(&local_rr) {
        let r = (tb * fs).round();
        if r >= 0.0 && (r as usize) < n {
            r_peaks.push(r as usize);
            let mut c = [0.0; 5];
            for (slot, bump) in c.iter_mut().zip(&params.waves) {
                *slot = (tb + bump.center * lrr) * fs;
            }
            wave_centers.push(c);
        }
    }

    let samples = if params.noise_std > 0.0 {
        let mut rng = seed::rng(params.seed, "ecg_noise", 0);
        let normal = Normal::new(0.0, params.noise_std).expect("finite noise std");
        clean.iter().map(|v| v + normal.sample(&mut rng)).collect()
    } else {
        clean.clone()
    };
    SyntheticEcg { samples, r_peaks, wave_centers, clean }
}

/// Noise standard deviation giving the requested SNR (dB) against the
/// variance of the clean signal.
pub fn noise_std_for_snr(clean: &[f64], snr_db: f64) -> f64 {
    let n = clean.len() as f64;
    let mean = clean.iter().sum::<f64>() / n;
    let var = clean.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (var / 10f64.powf(snr_db / 10.0)).sqrt()
}
