//! Recordings, WAV ingestion, resampling, windowing and annotations.

mod annotation;
mod resample;
mod wav;

pub use annotation::{annotation_to_frames, Annotation, HeartState, StateSequence};
pub use resample::resample;
pub use wav::{load_wav, write_wav};

use crate::error::{ensure, Result};

/// Rate the network operates at.
pub const MODEL_RATE_HZ: u32 = 1000;
/// 2 s windows at [`MODEL_RATE_HZ`].
pub const SEGMENT_LEN: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub id: String,
}

impl Recording {
    pub fn new(id: impl Into<String>, samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Recording {
            samples,
            sample_rate_hz,
            id: id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Same id and rate, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Recording {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            id: self.id.clone(),
        }
    }
}

/// A fixed-length window cut from a 1000 Hz recording.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub samples: Vec<f64>,
    pub start_sample: usize,
    pub start_time_s: f64,
}

/// Hop between consecutive windows, in samples.
pub fn segment_hop(overlap_fraction: f64) -> usize {
    ((SEGMENT_LEN as f64 * (1.0 - overlap_fraction)).round() as usize).max(1)
}

/// Start offsets (in samples) of the windows [`slice_segments`] produces
/// for a signal of `n` samples.
pub fn segment_starts(n: usize, overlap_fraction: f64) -> Result<Vec<usize>> {
    ensure!(
        (0.0..1.0).contains(&overlap_fraction),
        InvalidArgument,
        "overlap fraction must be in [0, 1), got {overlap_fraction}"
    );
    ensure!(
        n >= SEGMENT_LEN,
        TooShort,
        "{n} samples, need at least {SEGMENT_LEN} for one window"
    );
    let hop = segment_hop(overlap_fraction);
    let mut starts: Vec<usize> = (0..).map(|k| k * hop).take_while(|s| s + SEGMENT_LEN <= n).collect();
    let last = *starts.last().expect("at least one window");
    if last + SEGMENT_LEN < n {
        // Tail shorter than a hop: one more window ending at the last sample.
        starts.push(n - SEGMENT_LEN);
    }
    Ok(starts)
}

/// Cuts a 1000 Hz recording into 2000-sample windows, hop
/// `2000 * (1 - overlap_fraction)`, plus a final window flush with the end
/// when the hop grid leaves a tail uncovered.
pub fn slice_segments(rec: &Recording, overlap_fraction: f64) -> Result<Vec<Segment>> {
    ensure!(
        rec.sample_rate_hz == MODEL_RATE_HZ,
        InvalidArgument,
        "slicing needs a {MODEL_RATE_HZ} Hz recording, got {} Hz",
        rec.sample_rate_hz
    );
    let starts = segment_starts(rec.len(), overlap_fraction)?;
    Ok(starts
        .into_iter()
        .map(|s| Segment {
            samples: rec.samples[s..s + SEGMENT_LEN].to_vec(),
            start_sample: s,
            start_time_s: s as f64 / MODEL_RATE_HZ as f64,
        })
        .collect())
}
