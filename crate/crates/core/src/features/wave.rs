use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::signal::{elementwise_mean, scale_unit, CycleEnsemble};
use crate::{Error, Result};

/// Index ranges on the R-centered 100-point cycle searched for each wave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveRegions {
    pub p: Range<usize>,
    pub q: Range<usize>,
    pub s: Range<usize>,
    pub t: Range<usize>,
}

impl Default for WaveRegions {
    fn default() -> Self {
        // P [5,40), Q [40,50), S (50,62], T [62,95]
        Self { p: 5..40, q: 40..50, s: 51..63, t: 62..96 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveFeatures {
    pub p_timing: f64,
    pub q_timing: f64,
    pub s_timing: f64,
    pub t_timing: f64,
    pub q_amplitude: f64,
    pub t_amplitude: f64,
}

/// Element-wise mean of the cycles rescaled to [0, 1].
pub fn mean_cycle(ensemble: &CycleEnsemble) -> Result<Vec<f64>> {
    if ensemble.cycles.is_empty() {
        return Err(Error::NoCycles);
    }
    scale_unit(&elementwise_mean(&ensemble.cycles))
}

fn median_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Most prominent peak or valley inside `region`: the interior local extremum
/// farthest from the region baseline (median of its first and last three
/// samples). Falls back to the farthest sample when no local extremum exists.
pub fn prominent_extremum(cycle: &[f64], region: Range<usize>) -> usize {
    let region = region.start.min(cycle.len())..region.end.min(cycle.len());
    let len = region.len();
    let edge = 3.min(len);
    let mut ends: Vec<f64> = cycle[region.start..region.start + edge].to_vec();
    ends.extend_from_slice(&cycle[region.end - edge..region.end]);
    let baseline = median_of(ends);
    let dev = |i: usize| (cycle[i] - baseline).abs();

    let mut best: Option<usize> = None;
    for i in region.start + 1..region.end.saturating_sub(1) {
        let (prev, cur, next) = (cycle[i - 1], cycle[i], cycle[i + 1]);
        let is_max = cur >= prev && cur > next;
        let is_min = cur <= prev && cur < next;
        if (is_max || is_min) && best.is_none_or(|b| dev(i) > dev(b)) {
            best = Some(i);
        }
    }
    best.unwrap_or_else(|| {
        region
            .clone()
            .fold(region.start, |b, i| if dev(i) > dev(b) { i } else { b })
    })
}

pub fn wave_features(cycle: &[f64], regions: &WaveRegions) -> Result<WaveFeatures> {
    let all = [&regions.p, &regions.q, &regions.s, &regions.t];
    if all.iter().any(|r| r.is_empty() || r.end > cycle.len()) {
        return Err(Error::InvalidInput(format!(
            "wave regions {regions:?} do not fit a cycle of length {}",
            cycle.len()
        )));
    }
    let p = prominent_extremum(cycle, regions.p.clone());
    let q = prominent_extremum(cycle, regions.q.clone());
    let s = prominent_extremum(cycle, regions.s.clone());
    let t = prominent_extremum(cycle, regions.t.clone());
    Ok(WaveFeatures {
        p_timing: p as f64,
        q_timing: q as f64,
        s_timing: s as f64,
        t_timing: t as f64,
        q_amplitude: cycle[q],
        t_amplitude: cycle[t],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump_cycle(bumps: &[(f64, f64, f64)]) -> Vec<f64> {
        let raw: Vec<f64> = (0..100)
            .map(|i| {
                bumps
                    .iter()
                    .map(|&(c, w, a)| a * (-0.5 * ((i as f64 - c) / w).powi(2)).exp())
                    .sum()
            })
            .collect();
        scale_unit(&raw).unwrap()
    }

    const TEMPLATE: [(f64, f64, f64); 5] = [
        (25.0, 2.5, 0.15),
        (44.0, 1.2, -0.15),
        (50.0, 1.2, 1.0),
        (56.0, 1.2, -0.25),
        (85.0, 4.5, 0.3),
    ];

    #[test]
    fn recovers_constructed_wave_centers() {
        let c = bump_cycle(&TEMPLATE);
        let w = wave_features(&c, &WaveRegions::default()).unwrap();
        for (got, want) in [(w.p_timing, 25.0), (w.q_timing, 44.0), (w.s_timing, 56.0), (w.t_timing, 85.0)] {
            assert!((got - want).abs() <= 2.0, "{got} vs {want}");
        }
        assert!(w.t_amplitude > c[62] && w.t_amplitude > c[95]);
    }

    #[test]
    fn inverted_t_wave_sits_below_baseline() {
        let mut bumps = TEMPLATE;
        bumps[4].2 = -0.3;
        let c = bump_cycle(&bumps);
        let w = wave_features(&c, &WaveRegions::default()).unwrap();
        assert!((w.t_timing - 85.0).abs() <= 2.0);
        let baseline = median_of(vec![c[62], c[63], c[64], c[93], c[94], c[95]]);
        assert!(w.t_amplitude < baseline);
    }

    #[test]
    fn symmetric_cycle_gives_symmetric_timings() {
        let c = bump_cycle(&[
            (25.0, 3.0, 0.2),
            (45.0, 1.2, -0.2),
            (50.0, 1.2, 1.0),
            (55.0, 1.2, -0.2),
            (75.0, 3.0, 0.2),
        ]);
        let w = wave_features(&c, &WaveRegions::default()).unwrap();
        assert!(((w.t_timing - 50.0) - (50.0 - w.p_timing)).abs() <= 1.0);
        assert!(((w.s_timing - 50.0) - (50.0 - w.q_timing)).abs() <= 1.0);
    }

    #[test]
    fn monotone_region_falls_back_to_farthest_sample() {
        let c: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let idx = prominent_extremum(&c, 62..96);
        assert!(idx == 62 || idx == 95);
    }

    #[test]
    fn mean_cycle_rescales() {
        let c: Vec<f64> = (0..100).map(|i| (i as f64 / 15.0).sin() * 3.0 + 1.0).collect();
        let single = CycleEnsemble { cycles: vec![c.clone()], quality: 1.0, rr_intervals: vec![] };
        let double = CycleEnsemble { cycles: vec![c.clone(), c.clone()], quality: 1.0, rr_intervals: vec![] };
        let m1 = mean_cycle(&single).unwrap();
        assert_eq!(m1, scale_unit(&c).unwrap());
        assert_eq!(mean_cycle(&double).unwrap(), m1);
        let flat = CycleEnsemble { cycles: vec![vec![2.0; 100]], quality: 1.0, rr_intervals: vec![] };
        assert!(mean_cycle(&flat).is_err());
    }
}
