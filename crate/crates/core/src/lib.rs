//! Heart sound (phonocardiogram) segmentation into S1, systole, S2 and
//! diastole.
//!
//! The pipeline: [`preprocess`] turns a recording into three filtered
//! channels, the temporal-framing network in [`model`] maps 2 s windows to
//! per-frame state logits, [`inference`] stitches overlapping windows and
//! decodes them with a cyclic Viterbi pass, and [`evaluation`] scores onsets
//! against a reference with a tolerance window. [`dataset`] computes
//! difficulty indicators and synthesizes annotated corpora.

pub mod autodiff;
pub mod dataset;
pub mod evaluation;
pub mod inference;
mod error;
pub mod model;
pub mod preprocess;
pub mod signal_io;
pub mod training;

pub use error::{Error, Result};
