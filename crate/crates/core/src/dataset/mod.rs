//! Difficulty indicators, level partition, and synthetic corpora.

mod corpus;
mod indicators;
mod synth;

pub use corpus::{build_level, build_level_corpus, level_config, write_corpus, LabeledRecording, CORPUS_DURATION_S, MAX_ATTEMPTS};
pub use indicators::{
    assign_level, assign_level_with, characterize, compute_indicators, d_rate, d_rhythm, flags, sample_states, Flags,
    Indicators, Level, LevelRules,
};
pub use synth::{synth_pcg, SynthConfig, S1_DURATION_S, S2_DURATION_S};
