use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::indicators::{assign_level, compute_indicators, Indicators, Level};
use super::synth::{synth_pcg, SynthConfig};
use crate::error::{ensure, Error, Result};
use crate::signal_io::{write_wav, Annotation, Recording};

/// Attempts per recording before giving up.
pub const MAX_ATTEMPTS: usize = 200;
pub const CORPUS_DURATION_S: f64 = 10.0;

/// One synthesized, verified recording.
#[derive(Clone, Debug)]
pub struct LabeledRecording {
    pub recording: Recording,
    pub annotation: Annotation,
    pub config: SynthConfig,
    pub indicators: Indicators,
    pub level: Level,
}

/// Independent stream per (corpus seed, level, index, attempt).
fn derive_seed(seed: u64, level: Level, index: usize, attempt: usize) -> u64 {
    let mut z = seed
        ^ (level as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (attempt as u64).wrapping_mul(0x94D0_49BB_1331_11EB);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator settings aimed at one region of the difficulty plane.
pub fn level_config(level: Level, seed: u64) -> SynthConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = SynthConfig {
        duration_s: CORPUS_DURATION_S,
        seed,
        ..SynthConfig::default()
    };
    match level {
        Level::I => {
            cfg.heart_rate_bpm = rng.gen_range(60.0..95.0);
            cfg.rhythm_jitter_s = rng.gen_range(0.0..0.03);
            cfg.noise_snr_db = rng.gen_range(20.0..30.0);
            cfg.murmur_level = 0.0;
            cfg.s2_gain = rng.gen_range(0.6..0.9);
        }
        Level::II => {
            cfg.s2_gain = rng.gen_range(0.5..0.8);
            if rng.gen_bool(0.5) {
                // Moderate murmur, regular rhythm.
                cfg.heart_rate_bpm = rng.gen_range(60.0..95.0);
                cfg.rhythm_jitter_s = rng.gen_range(0.0..0.05);
                cfg.murmur_level = rng.gen_range(0.4..0.7);
                cfg.noise_snr_db = rng.gen_range(12.0..20.0);
            } else {
                // Clean-ish but irregular.
                cfg.heart_rate_bpm = rng.gen_range(50.0..60.0);
                cfg.rhythm_jitter_s = rng.gen_range(0.2..0.26);
                cfg.murmur_level = rng.gen_range(0.0..0.3);
                cfg.noise_snr_db = rng.gen_range(12.0..20.0);
            }
        }
        Level::III => {
            cfg.heart_rate_bpm = rng.gen_range(45.0..55.0);
            cfg.rhythm_jitter_s = rng.gen_range(0.2..0.26);
            cfg.murmur_level = rng.gen_range(1.2..2.0);
            cfg.noise_snr_db = rng.gen_range(3.0..10.0);
            cfg.s2_gain = rng.gen_range(0.35..0.6);
        }
    }
    cfg
}

fn build_one(level: Level, index: usize, seed: u64) -> Result<LabeledRecording> {
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let config = level_config(level, derive_seed(seed, level, index, attempt));
        let (mut recording, annotation) = match synth_pcg(&config) {
            Ok(pair) => pair,
            Err(e @ Error::Generation(_)) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let indicators = match compute_indicators(&recording, &annotation) {
            Ok(i) => i,
            Err(e @ Error::Undefined(_)) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        if assign_level(&indicators) == level {
            recording.id = format!("{}_{index:03}", level.name());
            return Ok(LabeledRecording {
                recording,
                annotation,
                config,
                indicators,
                level,
            });
        }
    }
    Err(Error::Generation(format!(
        "no {level} recording #{index} after {MAX_ATTEMPTS} attempts{}",
        last_err.map(|e| format!(" (last error: {e})")).unwrap_or_default()
    )))
}

/// Synthesizes `n_per_level[k]` ten-second recordings for each level, each
/// verified (by its measured indicators) to fall in its intended region.
pub fn build_level_corpus(n_per_level: [usize; 3], seed: u64) -> Result<[Vec<LabeledRecording>; 3]> {
    ensure!(n_per_level.iter().all(|&n| n >= 1), InvalidArgument, "each level needs at least one recording");
    let build = |level: Level, n: usize| (0..n).map(|i| build_one(level, i, seed)).collect::<Result<Vec<_>>>();
    Ok([
        build(Level::I, n_per_level[0])?,
        build(Level::II, n_per_level[1])?,
        build(Level::III, n_per_level[2])?,
    ])
}

/// Just one level, e.g. for training corpora.
pub fn build_level(level: Level, n: usize, seed: u64) -> Result<Vec<LabeledRecording>> {
    ensure!(n >= 1, InvalidArgument, "need at least one recording");
    (0..n).map(|i| build_one(level, i, seed)).collect()
}

#[derive(Serialize)]
struct ManifestRow<'a> {
    path: String,
    annotation: String,
    level: &'a str,
    seed: u64,
    heart_rate_bpm: f64,
    rhythm_jitter_s: f64,
    noise_snr_db: f64,
    murmur_level: f64,
    s2_gain: f64,
    duration_s: f64,
    d_noise_murmur: f64,
    d_rhythm: f64,
    d_rate: f64,
    f_s2: f64,
}

/// Writes `<id>.wav` and `<id>.csv` pairs plus `manifest.csv` into `dir`.
pub fn write_corpus(dir: &Path, items: &[LabeledRecording]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
    for item in items {
        let wav = format!("{}.wav", item.recording.id);
        let ann = format!("{}.csv", item.recording.id);
        write_wav(&dir.join(&wav), &item.recording)?;
        item.annotation.save_csv(&dir.join(&ann))?;
        w.serialize(ManifestRow {
            path: wav,
            annotation: ann,
            level: item.level.name(),
            seed: item.config.seed,
            heart_rate_bpm: item.config.heart_rate_bpm,
            rhythm_jitter_s: item.config.rhythm_jitter_s,
            noise_snr_db: item.config.noise_snr_db,
            murmur_level: item.config.murmur_level,
            s2_gain: item.config.s2_gain,
            duration_s: item.config.duration_s,
            d_noise_murmur: item.indicators.d_noise_murmur,
            d_rhythm: item.indicators.d_rhythm,
            d_rate: item.indicators.d_rate,
            f_s2: item.indicators.f_s2,
        })
        .map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))
}
