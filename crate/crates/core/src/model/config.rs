use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Samples per network input window (2 s at 1000 Hz).
pub const INPUT_LEN: usize = 2000;
/// Filtered views of the recording fed to the encoder.
pub const INPUT_CHANNELS: usize = 3;
/// S1, systole, S2, diastole.
pub const NUM_STATES: usize = 4;
/// Epsilon inside the instance-norm square root.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderBlock {
    pub channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfanConfig {
    pub encoder_blocks: Vec<EncoderBlock>,
    /// Frame length in samples (20 samples = 20 ms at 1000 Hz).
    pub frame_len_samples: usize,
    pub decoder_conv_channels: Vec<usize>,
    pub lstm_hidden: usize,
    pub num_states: usize,
}

impl Default for TfanConfig {
    fn default() -> Self {
        let block = |channels, dilation| EncoderBlock {
            channels,
            kernel_size: 3,
            dilation,
        };
        TfanConfig {
            encoder_blocks: vec![block(16, 1), block(16, 2), block(32, 4), block(32, 8)],
            frame_len_samples: 20,
            decoder_conv_channels: vec![32, 64],
            lstm_hidden: 64,
            num_states: NUM_STATES,
        }
    }
}

impl TfanConfig {
    /// A narrower network with the same topology, for quick experiments.
    pub fn compact() -> Self {
        let block = |channels, dilation| EncoderBlock {
            channels,
            kernel_size: 3,
            dilation,
        };
        TfanConfig {
            encoder_blocks: vec![block(8, 1), block(8, 2), block(16, 4), block(16, 8)],
            frame_len_samples: 20,
            decoder_conv_channels: vec![16, 32],
            lstm_hidden: 32,
            num_states: NUM_STATES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.num_states == NUM_STATES,
            InvalidArgument,
            "num_states must be {NUM_STATES}, got {}",
            self.num_states
        );
        ensure!(
            self.frame_len_samples > 0 && INPUT_LEN % self.frame_len_samples == 0,
            InvalidArgument,
            "input length {INPUT_LEN} is not divisible by frame length {}",
            self.frame_len_samples
        );
        ensure!(!self.encoder_blocks.is_empty(), InvalidArgument, "encoder needs at least one block");
        for (i, b) in self.encoder_blocks.iter().enumerate() {
            ensure!(
                b.channels > 0 && b.dilation > 0 && b.kernel_size % 2 == 1,
                InvalidArgument,
                "encoder block {i}: channels and dilation must be positive and kernel size odd"
            );
        }
        ensure!(
            self.decoder_conv_channels.iter().all(|&c| c > 0),
            InvalidArgument,
            "decoder channels must be positive"
        );
        ensure!(self.lstm_hidden > 0, InvalidArgument, "lstm_hidden must be positive");
        Ok(())
    }

    pub fn frames_per_window(&self) -> usize {
        INPUT_LEN / self.frame_len_samples
    }

    pub fn encoder_channels(&self) -> usize {
        self.encoder_blocks.last().map_or(INPUT_CHANNELS, |b| b.channels)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TfanConfig = serde_json::from_str(text).map_err(|e| Error::Format(format!("model config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
