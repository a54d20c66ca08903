use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::signal_io::Recording;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerConfig {
    /// Local window length L (samples). Windows tile the signal without
    /// overlap; the last one may be shorter.
    pub window_len_samples: usize,
    /// Sub-segment length for the local power estimates (samples).
    pub var_segment_len_samples: usize,
    pub epsilon: f64,
}

impl Default for WienerConfig {
    fn default() -> Self {
        WienerConfig {
            window_len_samples: 500,
            var_segment_len_samples: 50,
            epsilon: 1e-10,
        }
    }
}

impl WienerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.var_segment_len_samples > 0, InvalidArgument, "sub-segment length must be positive");
        ensure!(
            self.window_len_samples >= 2 * self.var_segment_len_samples,
            InvalidArgument,
            "window length {} must be at least twice the sub-segment length {}",
            self.window_len_samples,
            self.var_segment_len_samples
        );
        ensure!(self.epsilon > 0.0, InvalidArgument, "epsilon must be positive");
        Ok(())
    }
}

/// Linear-interpolation quantile of unsorted data (`q` in [0, 1]).
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Local Wiener gain per sub-segment: within each window the noise power
/// is the lower quartile of the sub-segment powers and each sample is
/// scaled by `clamp(1 - Q1 / R_y, 0, 1)`, `R_y` being the mean-square power
/// of its sub-segment (floored at epsilon).
pub fn adaptive_wiener(rec: &Recording, cfg: &WienerConfig) -> Result<Recording> {
    cfg.validate()?;
    ensure!(!rec.is_empty(), EmptyInput, "recording {} has no samples", rec.id);
    let mut out = rec.samples.clone();
    for window in out.chunks_mut(cfg.window_len_samples) {
        let powers: Vec<f64> = window
            .chunks(cfg.var_segment_len_samples)
            .map(|s| s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64)
            .collect();
        let q1 = quantile(&powers, 0.25);
        for (seg, &p) in window.chunks_mut(cfg.var_segment_len_samples).zip(&powers) {
            let gain = (1.0 - q1 / p.max(cfg.epsilon)).clamp(0.0, 1.0);
            seg.iter_mut().for_each(|v| *v *= gain);
        }
    }
    Ok(rec.with_samples(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: Vec<f64>) -> Vec<f64> {
        adaptive_wiener(&Recording::new("w", x, 1000), &WienerConfig::default()).unwrap().samples
    }

    #[test]
    fn zero_input_stays_zero() {
        assert!(run(vec![0.0; 1234]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_power_is_removed() {
        let x: Vec<f64> = (0..500).map(|i| if i % 2 == 0 { 0.3 } else { -0.3 }).collect();
        assert!(run(x).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn loud_segment_gets_gain_point_nine() {
        // Ten sub-segments, one with ten times the power of the rest.
        let amp = |k: usize| if k == 4 { 10f64.sqrt() } else { 1.0 };
        let x: Vec<f64> = (0..500).map(|i| amp(i / 50) * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let y = run(x.clone());
        for i in 0..500 {
            let expect = if i / 50 == 4 { 0.9 * x[i] } else { 0.0 };
            assert!((y[i] - expect).abs() < 1e-12, "sample {i}");
        }
    }

    #[test]
    fn quantile_matches_linear_interpolation() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0, 5.0], 0.25), 2.0);
        assert!((quantile(&[1.0, 2.0, 3.0, 4.0], 0.25) - 1.75).abs() < 1e-15);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }

    #[test]
    fn config_validation() {
        let bad = WienerConfig {
            window_len_samples: 90,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = WienerConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(adaptive_wiener(&Recording::new("e", vec![], 1000), &WienerConfig::default()).is_err());
    }
}
