//! 30-60 Hz Butterworth band-pass, applied forward and backward.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{ensure, Result};
use crate::signal_io::Recording;

pub const LOW_HZ: f64 = 30.0;
pub const HIGH_HZ: f64 = 60.0;

/// Second-order section `[b0, b1, b2, a0 = 1, a1, a2]`.
pub type Sos = [f64; 6];

/// Digital Butterworth band-pass from a second-order low-pass prototype
/// (four poles): band edges pre-warped, low-pass to band-pass mapping,
/// bilinear transform. Unity gain at the geometric center frequency.
///
/// Sections are ordered by pole radius; the first carries the gain and the
/// zeros at z = -1, the second the zeros at z = 1.
pub fn butter_bandpass(low_hz: f64, high_hz: f64, fs: f64) -> Result<[Sos; 2]> {
    ensure!(
        0.0 < low_hz && low_hz < high_hz && high_hz < fs / 2.0,
        InvalidArgument,
        "band {low_hz}-{high_hz} Hz is not inside (0, {}) Hz",
        fs / 2.0
    );
    let k = 2.0 * fs;
    let w1 = k * (PI * low_hz / fs).tan();
    let w2 = k * (PI * high_hz / fs).tan();
    let bw = w2 - w1;
    let w0sq = w1 * w2;

    // Prototype poles exp(j 3pi/4), exp(j 5pi/4); each maps to two
    // band-pass poles, roots of s^2 - p bw s + w0^2.
    let proto = Complex64::from_polar(1.0, 3.0 * PI / 4.0);
    let disc = (proto * proto * bw * bw - 4.0 * w0sq).sqrt();
    let analog = [(proto * bw + disc) / 2.0, (proto * bw - disc) / 2.0];
    let mut digital: Vec<Complex64> = analog.iter().map(|&s| (k + s) / (k - s)).collect();
    digital.sort_by(|a, b| a.norm().total_cmp(&b.norm()));

    let den = |p: Complex64| [1.0, -2.0 * p.re, p.norm_sqr()];
    let (d1, d2) = (den(digital[0]), den(digital[1]));
    let mut sos = [
        [1.0, 2.0, 1.0, d1[0], d1[1], d1[2]],
        [1.0, -2.0, 1.0, d2[0], d2[1], d2[2]],
    ];
    // Normalize at the digital image of the analog center frequency.
    let fc = fs / PI * (w0sq.sqrt() / k).atan();
    let g = response(&sos, fc, fs).norm();
    for b in &mut sos[0][..3] {
        *b /= g;
    }
    Ok(sos)
}

/// Complex frequency response of a cascade at `f_hz`.
pub fn response(sos: &[Sos], f_hz: f64, fs: f64) -> Complex64 {
    let z1 = Complex64::from_polar(1.0, -2.0 * PI * f_hz / fs);
    let z2 = z1 * z1;
    sos.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
        acc * (s[0] + s[1] * z1 + s[2] * z2) / (s[3] + s[4] * z1 + s[5] * z2)
    })
}

/// Transposed direct form II, in place, starting from state `zi`.
fn sosfilt(sos: &[Sos], x: &mut [f64], zi: &[[f64; 2]]) {
    for (s, z) in sos.iter().zip(zi) {
        let (mut z1, mut z2) = (z[0], z[1]);
        for v in x.iter_mut() {
            let xin = *v;
            let y = s[0] * xin + z1;
            z1 = s[1] * xin - s[4] * y + z2;
            z2 = s[2] * xin - s[5] * y;
            *v = y;
        }
    }
}

/// Steady-state section states for a unit step input.
fn sosfilt_zi(sos: &[Sos]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sos.iter()
        .map(|s| {
            let dc = (s[0] + s[1] + s[2]) / (s[3] + s[4] + s[5]);
            let zi = [scale * (dc - s[0]), scale * (s[2] - s[5] * dc)];
            scale *= dc;
            zi
        })
        .collect()
}

/// Zero-phase filtering: odd extension at both ends, forward pass, reversed
/// pass, each started from the steady state of the edge sample.
pub fn sosfiltfilt(sos: &[Sos], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = (3 * (2 * sos.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = sosfilt_zi(sos);
    let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();
    let z0 = scaled(ext[0]);
    sosfilt(sos, &mut ext, &z0);
    ext.reverse();
    let z1 = scaled(ext[0]);
    sosfilt(sos, &mut ext, &z1);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Zero-phase 30-60 Hz band-pass; the output has the input's length.
pub fn bandpass_30_60(rec: &Recording) -> Result<Recording> {
    ensure!(
        rec.sample_rate_hz > 2 * HIGH_HZ as u32,
        InvalidArgument,
        "band-pass needs a sample rate above {} Hz, got {}",
        2 * HIGH_HZ as u32,
        rec.sample_rate_hz
    );
    let sos = butter_bandpass(LOW_HZ, HIGH_HZ, rec.sample_rate_hz as f64)?;
    Ok(rec.with_samples(sosfiltfilt(&sos, &rec.samples)))
}
