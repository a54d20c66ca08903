//! Rational-ratio resampling with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use super::Recording;
use crate::error::{ensure, Result};

const KAISER_BETA: f64 = 8.0;
/// Cutoff as a fraction of the lower of the two rates.
const CUTOFF_FRACTION: f64 = 0.45;
/// Zero crossings of the sinc kept on each side of the kernel center.
const ZERO_CROSSINGS: f64 = 64.0;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Reflect-about-the-edge index (`x[-1] = x[1]`), folded until in range.
fn reflect(mut i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    i = i.rem_euclid(period);
    if i >= n as i64 {
        i = period - i;
    }
    i as usize
}

/// Band-limited resampling to `target_hz`.
///
/// The kernel cuts off at `0.45 * min(source, target)`, so content above
/// the new Nyquist frequency is suppressed when downsampling and spectral
/// images are suppressed when upsampling. Each output phase's taps are
/// normalized to unit sum, which keeps constant signals exact. Output
/// length is `ceil(n * target / source)`.
pub fn resample(rec: &Recording, target_hz: u32) -> Result<Recording> {
    ensure!(target_hz > 0, InvalidArgument, "target rate must be positive");
    ensure!(rec.sample_rate_hz > 0, InvalidArgument, "source rate must be positive");
    if rec.sample_rate_hz == target_hz || rec.is_empty() {
        let mut out = rec.clone();
        out.sample_rate_hz = target_hz;
        return Ok(out);
    }
    let (src, dst) = (rec.sample_rate_hz as u64, target_hz as u64);
    let g = gcd(src, dst);
    let (up, down) = (dst / g, src / g);

    // Kernel in input-sample units: h(t) = sinc(2 fc t / src) * kaiser(t / W).
    let fc = CUTOFF_FRACTION * src.min(dst) as f64;
    let scale = 2.0 * fc / src as f64;
    let half_width = ZERO_CROSSINGS / scale;
    let reach = half_width.ceil() as i64;
    let i0_beta = bessel_i0(KAISER_BETA);
    let kernel = |t: f64| -> f64 {
        let r = t / half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        sinc(scale * t) * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
    };

    // Output k sits at input position k * down / up = base + phase / up.
    let phases: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut taps: Vec<f64> = (-reach..=reach + 1).map(|j| kernel(frac - j as f64)).collect();
            let s: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|v| *v /= s);
            taps
        })
        .collect();

    let n = rec.len();
    let out_len = (n as u64 * up).div_ceil(down) as usize;
    let x = &rec.samples;
    let mut out = Vec::with_capacity(out_len);
    for k in 0..out_len as u64 {
        let pos = k * down;
        let base = (pos / up) as i64;
        let taps = &phases[(pos % up) as usize];
        let first = base - reach;
        let acc: f64 = if first >= 0 && first + taps.len() as i64 <= n as i64 {
            let s = &x[first as usize..first as usize + taps.len()];
            s.iter().zip(taps).map(|(a, b)| a * b).sum()
        } else {
            taps.iter()
                .enumerate()
                .map(|(j, w)| w * x[reflect(first + j as i64, n)])
                .sum()
        };
        out.push(acc);
    }
    Ok(Recording::new(rec.id.clone(), out, target_hz))
}
