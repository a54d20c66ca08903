//! Whole-recording segmentation: sliding windows through the network,
//! averaged per-frame posteriors, then a cyclic-HMM Viterbi pass.

mod viterbi;

pub use viterbi::{states_to_onsets, viterbi_decode, viterbi_scores, TransitionMatrix, ViterbiPath};

use std::io::Write;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{ensure, Error, Result};
use crate::model::{ModelParams, Tfan, INPUT_CHANNELS, INPUT_LEN, NUM_STATES};
use crate::preprocess::{make_channels, MultiChannelSignal};
use crate::signal_io::{resample, segment_hop, segment_starts, Annotation, Recording, StateSequence, MODEL_RATE_HZ};

/// Windows per forward pass.
const BATCH: usize = 8;

/// Softmax of each `[.., 4]` row, in f64.
pub fn softmax_rows(logits: &[f32]) -> Vec<[f64; 4]> {
    logits
        .chunks_exact(NUM_STATES)
        .map(|z| {
            let m = z.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
            let e = [0, 1, 2, 3].map(|k| (z[k] as f64 - m).exp());
            let s: f64 = e.iter().sum();
            e.map(|v| v / s)
        })
        .collect()
}

/// Per-frame posteriors for a whole recording.
///
/// The signal is truncated to `M = floor(N / τ)` whole frames. Windows on the
/// hop grid contribute to every frame they cover; the final window realigned
/// to the end contributes only to frames no grid window reached. Each frame's
/// probabilities are the mean over its contributing windows.
pub fn sliding_probs(model: &Tfan, params: &ModelParams, channels: &MultiChannelSignal, overlap: f64) -> Result<Vec<[f64; 4]>> {
    let tau = model.config().frame_len_samples;
    let frames_per_window = INPUT_LEN / tau;
    let m = channels.len() / tau;
    let n = m * tau;
    let starts = segment_starts(n, overlap)?;
    let hop = segment_hop(overlap);
    ensure!(
        hop % tau == 0,
        InvalidArgument,
        "overlap {overlap} gives a hop of {hop} samples, not a multiple of the {tau}-sample frame"
    );

    let mut sum = vec![[0.0f64; 4]; m];
    let mut count = vec![0u32; m];
    for chunk in starts.chunks(BATCH) {
        let mut data = Vec::with_capacity(chunk.len() * INPUT_CHANNELS * INPUT_LEN);
        for &s in chunk {
            data.extend(channels.window_f32(s, INPUT_LEN));
        }
        let x = Tensor::new(vec![chunk.len(), INPUT_CHANNELS, INPUT_LEN], data)?;
        let logits = model.predict(params, &x)?;
        let probs = softmax_rows(logits.0.data());
        for (w, &s) in chunk.iter().enumerate() {
            let f0 = s / tau;
            let realigned = s % hop != 0;
            for k in 0..frames_per_window {
                let f = f0 + k;
                if realigned && count[f] > 0 {
                    continue;
                }
                let p = probs[w * frames_per_window + k];
                for c in 0..4 {
                    sum[f][c] += p[c];
                }
                count[f] += 1;
            }
        }
    }
    Ok(sum
        .into_iter()
        .zip(count)
        .map(|(s, c)| {
            debug_assert!(c > 0);
            s.map(|v| v / c as f64)
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub probs: Vec<[f64; 4]>,
    pub states: StateSequence,
    pub log_prob: f64,
    pub annotation: Annotation,
}

/// Trained model plus decoding settings.
#[derive(Clone, Debug)]
pub struct Segmenter {
    pub model: Tfan,
    pub params: ModelParams,
    pub overlap: f64,
    pub transitions: TransitionMatrix,
}

impl Segmenter {
    pub fn new(model: Tfan, params: ModelParams) -> Result<Self> {
        model.check_params(&params)?;
        Ok(Segmenter {
            model,
            params,
            overlap: 0.5,
            transitions: TransitionMatrix::cyclic(),
        })
    }

    pub fn frame_ms(&self) -> f64 {
        self.model.config().frame_len_samples as f64 * 1000.0 / MODEL_RATE_HZ as f64
    }

    /// Resamples to the model rate when needed, filters, and decodes.
    pub fn segment(&self, rec: &Recording) -> Result<Segmentation> {
        let rec = if rec.sample_rate_hz == MODEL_RATE_HZ {
            rec.clone()
        } else {
            resample(rec, MODEL_RATE_HZ)?
        };
        ensure!(
            rec.len() >= INPUT_LEN,
            TooShort,
            "recording {} lasts {:.3} s, need at least 2 s",
            rec.id,
            rec.duration_s()
        );
        let channels = make_channels(&rec)?;
        let probs = sliding_probs(&self.model, &self.params, &channels, self.overlap)?;
        let path = viterbi_decode(&probs, &self.transitions)?;
        let states = StateSequence {
            labels: path.states,
            frame_ms: self.frame_ms(),
        };
        let annotation = states_to_onsets(&states)?;
        Ok(Segmentation {
            probs,
            states,
            log_prob: path.log_prob,
            annotation,
        })
    }
}

/// Per-frame table: `time_s,state,p_s1,p_systole,p_s2,p_diastole`.
pub fn write_frame_csv(path: &Path, seg: &Segmentation) -> Result<()> {
    let mut out = String::from("time_s,state,p_s1,p_systole,p_s2,p_diastole\n");
    for (m, (s, p)) in seg.states.labels.iter().zip(&seg.probs).enumerate() {
        out.push_str(&format!(
            "{:.3},{},{:.6},{:.6},{:.6},{:.6}\n",
            m as f64 * seg.states.frame_ms / 1000.0,
            s,
            p[0],
            p[1],
            p[2],
            p[3]
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
