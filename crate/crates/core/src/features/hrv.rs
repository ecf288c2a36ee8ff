use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvFeatures {
    pub mean_hr: f64,
    pub sdnn: f64,
    pub sd1: f64,
    pub sd2: f64,
}

impl HrvFeatures {
    pub fn ratio_sd1_sd2(&self) -> Result<f64> {
        if self.sd2 > 0.0 {
            Ok(self.sd1 / self.sd2)
        } else {
            Err(Error::DegeneratePoincare)
        }
    }
}

fn variance(x: &[f64], population: bool) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    if population {
        ss / n
    } else {
        ss / (n - 1.0)
    }
}

/// Mean heart rate, SDNN and Poincare SD1/SD2 from RR intervals in seconds.
pub fn hrv_features(rr: &[f64], population: bool) -> Result<HrvFeatures> {
    if rr.len() < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 RR intervals, got {}", rr.len())));
    }
    if rr.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("RR intervals must be positive".into()));
    }
    let mean_rr = rr.iter().sum::<f64>() / rr.len() as f64;
    let var_rr = variance(rr, population);
    let diffs: Vec<f64> = rr.windows(2).map(|w| w[1] - w[0]).collect();
    let sd1_sq = variance(&diffs, population) / 2.0;
    let sd2_sq = (2.0 * var_rr - sd1_sq).max(0.0);
    Ok(HrvFeatures {
        mean_hr: 60.0 / mean_rr,
        sdnn: var_rr.sqrt(),
        sd1: sd1_sq.sqrt(),
        sd2: sd2_sq.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rhythm_has_degenerate_poincare() {
        let h = hrv_features(&[1.0, 1.0, 1.0], true).unwrap();
        assert_eq!(h.mean_hr, 60.0);
        assert_eq!(h.sdnn, 0.0);
        assert_eq!(h.sd1, 0.0);
        assert_eq!(h.sd2, 0.0);
        assert_eq!(h.ratio_sd1_sd2(), Err(Error::DegeneratePoincare));
    }

    #[test]
    fn alternating_rhythm_matches_direct_formula() {
        let h = hrv_features(&[0.8, 1.0, 0.8, 1.0], true).unwrap();
        // var(RR) = 0.01; dRR = [0.2, -0.2, 0.2] with mean 1/15
        let m: f64 = 0.2 / 3.0;
        let var_d = (2.0 * (0.2 - m) * (0.2 - m) + (-0.2 - m) * (-0.2 - m)) / 3.0;
        let sd1 = (var_d / 2.0).sqrt();
        let sd2 = (2.0 * 0.01 - sd1 * sd1).sqrt();
        assert!((h.sdnn - 0.1).abs() < 1e-12);
        assert!((h.sd1 - sd1).abs() < 1e-12);
        assert!((h.sd2 - sd2).abs() < 1e-12);
        assert!((h.ratio_sd1_sd2().unwrap() - sd1 / sd2).abs() < 1e-12);
        assert!((h.mean_hr - 60.0 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn eighty_bpm() {
        let h = hrv_features(&[0.75; 12], true).unwrap();
        assert!((h.mean_hr - 80.0).abs() < 1e-12);
    }

    #[test]
    fn mean_hr_and_sdnn_ignore_order_but_sd1_does_not() {
        let rr = [0.8, 0.82, 0.95, 0.7, 0.88, 0.91];
        let mut perm = rr;
        perm.reverse();
        perm.swap(0, 3);
        let a = hrv_features(&rr, true).unwrap();
        let b = hrv_features(&perm, true).unwrap();
        assert!((a.mean_hr - b.mean_hr).abs() < 1e-12);
        assert!((a.sdnn - b.sdnn).abs() < 1e-12);
        assert!((a.sd1 - b.sd1).abs() > 1e-6);
        // SD1 depends only on successive differences: shifting every RR leaves it unchanged
        let shifted: Vec<f64> = rr.iter().map(|v| v + 0.1).collect();
        let c = hrv_features(&shifted, true).unwrap();
        assert!((a.sd1 - c.sd1).abs() < 1e-12);
    }

    #[test]
    fn sample_variance_option() {
        let h = hrv_features(&[0.8, 1.0, 0.8, 1.0], false).unwrap();
        assert!((h.sdnn - (0.04f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
