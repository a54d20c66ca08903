//! Reverse biorthogonal 3.9 (`rbio3.9`) discrete wavelet transform with
//! half-sample symmetric boundary extension, and the thresholding denoiser
//! built on it.
//!
//! Coefficients are those published with PyWavelets (`pywt.Wavelet("rbio3.9")`),
//! and the transform reproduces its `"symmetric"` mode.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::signal_io::Recording;

pub const FILTER_LEN: usize = 20;

const DEC_LO: [f64; FILTER_LEN] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1767766952966369, 0.5303300858899106, 0.5303300858899106,
    0.1767766952966369, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
];
const DEC_HI: [f64; FILTER_LEN] = [
    0.0006797443727836989, 0.002039233118351097, -0.005060319219611981, -0.020618912641105536,
    0.014112787930175844, 0.09913478249423216, -0.012300136269419315, -0.32019196836077857,
    -0.0020500227115698858, 0.9421257006782068, -0.9421257006782068, 0.0020500227115698858, 0.32019196836077857,
    0.012300136269419315, -0.09913478249423216, -0.014112787930175844, 0.020618912641105536, 0.005060319219611981,
    -0.002039233118351097, -0.0006797443727836989,
];
const REC_LO: [f64; FILTER_LEN] = [
    -0.0006797443727836989, 0.002039233118351097, 0.005060319219611981, -0.020618912641105536,
    -0.014112787930175844, 0.09913478249423216, 0.012300136269419315, -0.32019196836077857, 0.0020500227115698858,
    0.9421257006782068, 0.9421257006782068, 0.0020500227115698858, -0.32019196836077857, 0.012300136269419315,
    0.09913478249423216, -0.014112787930175844, -0.020618912641105536, 0.005060319219611981, 0.002039233118351097,
    -0.0006797443727836989,
];
const REC_HI: [f64; FILTER_LEN] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1767766952966369, -0.5303300858899106, 0.5303300858899106,
    -0.1767766952966369, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
];

/// `x[-k-1] = x[k]`, `x[n+k] = x[n-1-k]`, folded until in range.
fn symmetric_index(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// One analysis step: `(approximation, detail)`, each of length
/// `floor((n + 19) / 2)`.
pub fn dwt(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let m = (n + FILTER_LEN - 1) / 2;
    let mut a = Vec::with_capacity(m);
    let mut d = Vec::with_capacity(m);
    for k in 0..m {
        let i = (2 * k + 1) as i64;
        let (mut sa, mut sd) = (0.0, 0.0);
        for j in 0..FILTER_LEN {
            let v = x[symmetric_index(i - j as i64, n)];
            sa += DEC_LO[j] * v;
            sd += DEC_HI[j] * v;
        }
        a.push(sa);
        d.push(sd);
    }
    (a, d)
}

/// One synthesis step; the output has length `2 * len - 18`.
pub fn idwt(a: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    ensure!(a.len() == d.len(), ShapeMismatch, "idwt: {} approximation vs {} detail coefficients", a.len(), d.len());
    let n = a.len();
    ensure!(2 * n >= FILTER_LEN - 2, TooShort, "idwt needs at least {} coefficients", (FILTER_LEN - 2) / 2);
    let out_len = 2 * n + 2 - FILTER_LEN;
    let offset = FILTER_LEN - 2;
    // y[t] = sum_k a[k] rec_lo[t + offset - 2k] + d[k] rec_hi[t + offset - 2k]
    let mut y = vec![0.0; out_len];
    for (t, yt) in y.iter_mut().enumerate() {
        let p = t + offset;
        let k_hi = p / 2;
        let k_lo = (p + 1).saturating_sub(FILTER_LEN).div_ceil(2);
        let mut s = 0.0;
        for k in k_lo..=k_hi.min(n - 1) {
            let j = p - 2 * k;
            s += a[k] * REC_LO[j] + d[k] * REC_HI[j];
        }
        *yt = s;
    }
    Ok(y)
}

/// Multi-level decomposition `[a_L, d_L, ..., d_1]` (coarsest first).
pub fn wavedec(x: &[f64], levels: usize) -> Result<Vec<Vec<f64>>> {
    ensure!(!x.is_empty(), EmptyInput, "wavelet decomposition of an empty signal");
    let mut details = Vec::with_capacity(levels);
    let mut a = x.to_vec();
    for _ in 0..levels {
        let (na, d) = dwt(&a);
        details.push(d);
        a = na;
    }
    let mut out = vec![a];
    out.extend(details.into_iter().rev());
    Ok(out)
}

/// Inverse of [`wavedec`]; when a level was odd-length, the approximation
/// carries one extra sample, which is dropped.
pub fn waverec(coeffs: &[Vec<f64>]) -> Result<Vec<f64>> {
    ensure!(!coeffs.is_empty(), EmptyInput, "no wavelet coefficients");
    let mut a = coeffs[0].clone();
    for d in &coeffs[1..] {
        if a.len() == d.len() + 1 {
            a.pop();
        }
        a = idwt(&a, d)?;
    }
    Ok(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletConfig {
    pub levels: usize,
    /// Detail levels `1..=thresholded_levels` (finest first) are thresholded.
    pub thresholded_levels: usize,
    /// Fixed threshold instead of the adaptive one.
    #[serde(default)]
    pub threshold_override: Option<f64>,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        WaveletConfig {
            levels: 5,
            thresholded_levels: 3,
            threshold_override: None,
        }
    }
}

/// Median over levels of the mean absolute detail coefficient.
pub fn adaptive_threshold(details: &[Vec<f64>]) -> f64 {
    let means: Vec<f64> = details
        .iter()
        .map(|d| d.iter().map(|v| v.abs()).sum::<f64>() / d.len() as f64)
        .collect();
    super::wiener::quantile(&means, 0.5)
}

pub fn wavelet_denoise_with(rec: &Recording, cfg: &WaveletConfig) -> Result<Recording> {
    ensure!(
        cfg.levels >= 1 && cfg.thresholded_levels <= cfg.levels,
        InvalidArgument,
        "need 1 <= levels and thresholded levels <= levels"
    );
    let min_len = FILTER_LEN << cfg.levels;
    ensure!(
        rec.len() >= min_len,
        TooShort,
        "{} samples; wavelet denoising at {} levels needs {min_len}",
        rec.len(),
        cfg.levels
    );
    let mut coeffs = wavedec(&rec.samples, cfg.levels)?;
    let thr = cfg.threshold_override.unwrap_or_else(|| adaptive_threshold(&coeffs[1..]));
    let n = coeffs.len();
    for d in &mut coeffs[n - cfg.thresholded_levels..] {
        d.iter_mut().filter(|v| v.abs() < thr).for_each(|v| *v = 0.0);
    }
    let mut y = waverec(&coeffs)?;
    y.truncate(rec.len());
    Ok(rec.with_samples(y))
}

/// Five-level decomposition, hard threshold on detail levels 1-3.
pub fn wavelet_denoise(rec: &Recording) -> Result<Recording> {
    wavelet_denoise_with(rec, &WaveletConfig::default())
}
