//! The three filtered views of a recording that form the network input:
//! adaptive Wiener, 30-60 Hz band-pass, and wavelet-denoised.

mod bandpass;
pub mod wavelet;
mod wiener;

pub use bandpass::{bandpass_30_60, butter_bandpass, response, sosfiltfilt, Sos};
pub use wavelet::{wavelet_denoise, wavelet_denoise_with, WaveletConfig};
pub use wiener::{adaptive_wiener, WienerConfig};

use crate::error::{ensure, Result};
use crate::signal_io::{Recording, MODEL_RATE_HZ};

/// Channels whose standard deviation falls below this fraction of the raw
/// recording's RMS are treated as empty.
const DEGENERATE_RATIO: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelSignal {
    /// Wiener, band-pass, wavelet; equal lengths.
    pub channels: [Vec<f64>; 3],
    pub sample_rate_hz: u32,
}

impl MultiChannelSignal {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel-major window `[3, len]` starting at `start`, as `f32`.
    pub fn window_f32(&self, start: usize, len: usize) -> Vec<f32> {
        self.channels
            .iter()
            .flat_map(|c| c[start..start + len].iter().map(|&v| v as f32))
            .collect()
    }
}

fn standardize(x: &mut [f64], floor: f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= floor || !sd.is_finite() {
        x.iter_mut().for_each(|v| *v = 0.0);
    } else {
        x.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
}

pub fn make_channels_with(rec: &Recording, wiener: &WienerConfig, wavelet: &WaveletConfig) -> Result<MultiChannelSignal> {
    ensure!(
        rec.sample_rate_hz == MODEL_RATE_HZ,
        InvalidArgument,
        "channels are built at {MODEL_RATE_HZ} Hz, got {} Hz",
        rec.sample_rate_hz
    );
    ensure!(!rec.is_empty(), EmptyInput, "recording {} has no samples", rec.id);
    ensure!(
        rec.samples.iter().all(|v| v.is_finite()),
        NonFinite,
        "recording {} contains NaN or infinite samples",
        rec.id
    );
    let rms = (rec.samples.iter().map(|v| v * v).sum::<f64>() / rec.len() as f64).sqrt();
    let floor = (DEGENERATE_RATIO * rms).max(f64::MIN_POSITIVE);
    let mut channels = [
        adaptive_wiener(rec, wiener)?.samples,
        bandpass_30_60(rec)?.samples,
        wavelet_denoise_with(rec, wavelet)?.samples,
    ];
    for c in &mut channels {
        standardize(c, floor);
    }
    Ok(MultiChannelSignal {
        channels,
        sample_rate_hz: rec.sample_rate_hz,
    })
}

/// Default filters, each channel standardized to zero mean and unit
/// variance over the recording.
pub fn make_channels(rec: &Recording) -> Result<MultiChannelSignal> {
    make_channels_with(rec, &WienerConfig::default(), &WaveletConfig::default())
}
