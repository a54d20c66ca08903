//! Synthetic phonocardiograms with exact state annotations.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::preprocess::{butter_bandpass, sosfiltfilt};
use crate::signal_io::{Annotation, HeartState, Recording, MODEL_RATE_HZ};

pub const S1_DURATION_S: f64 = 0.12;
pub const S2_DURATION_S: f64 = 0.10;
/// Murmur noise band.
const MURMUR_BAND_HZ: (f64, f64) = (40.0, 200.0);
/// Peak amplitude of the emitted waveform.
const OUTPUT_PEAK: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub heart_rate_bpm: f64,
    /// Standard deviation of the S1-to-S1 interval perturbation (s).
    pub rhythm_jitter_s: f64,
    pub noise_snr_db: f64,
    /// Murmur power in systole and diastole relative to the mean S1/S2 power.
    pub murmur_level: f64,
    /// S2 amplitude relative to S1.
    pub s2_gain: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            heart_rate_bpm: 72.0,
            rhythm_jitter_s: 0.0,
            noise_snr_db: 30.0,
            murmur_level: 0.0,
            s2_gain: 0.8,
            duration_s: 10.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.duration_s >= 10.0, InvalidArgument, "duration must be at least 10 s, got {}", self.duration_s);
        ensure!(
            self.heart_rate_bpm.is_finite() && self.heart_rate_bpm > 0.0,
            InvalidArgument,
            "heart rate must be positive"
        );
        ensure!(
            self.rhythm_jitter_s >= 0.0 && self.murmur_level >= 0.0 && self.s2_gain > 0.0,
            InvalidArgument,
            "jitter and murmur level must be non-negative and S2 gain positive"
        );
        ensure!(self.noise_snr_db.is_finite(), InvalidArgument, "SNR must be finite");
        Ok(())
    }

    /// S1 onset to S2 onset (s) at the mean rate.
    pub fn s1_to_s2_s(&self) -> f64 {
        0.2 + 0.13 * 60.0 / self.heart_rate_bpm
    }
}

/// Rescales deviations from the mean to population standard deviation
/// `sd`; the mean (and so the sum) is kept.
fn rescale_spread(v: &mut [f64], sd: f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let cur = (v.iter().map(|j| (j - mean).powi(2)).sum::<f64>() / n).sqrt();
    let k = if cur > 0.0 { sd / cur } else { 0.0 };
    v.iter_mut().for_each(|j| *j = mean + (*j - mean) * k);
}

/// Gaussian-enveloped tone filling `[onset, onset + dur)`.
fn add_sound(x: &mut [f64], fs: f64, onset: f64, dur: f64, freq: f64, amp: f64, phase: f64) {
    let sigma = dur / 6.0;
    let center = onset + dur / 2.0;
    let i0 = (onset * fs).ceil().max(0.0) as usize;
    let i1 = (((onset + dur) * fs).ceil() as usize).min(x.len());
    for (i, v) in x.iter_mut().enumerate().take(i1).skip(i0) {
        let t = i as f64 / fs;
        let env = (-0.5 * ((t - center) / sigma).powi(2)).exp();
        *v += amp * env * (2.0 * PI * freq * (t - onset) + phase).sin();
    }
}

/// Renders one recording and its annotation.
///
/// The first beat starts at a random phase of the cycle; the annotation's
/// first entry is at 0 s with the state active there. Beat intervals get
/// Gaussian perturbations, rescaled so that the S1 intervals inside the
/// recording have exactly `rhythm_jitter_s` spread (before rounding onsets
/// to the sample grid).
pub fn synth_pcg(cfg: &SynthConfig) -> Result<(Recording, Annotation)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fs = MODEL_RATE_HZ as f64;
    let period = 60.0 / cfg.heart_rate_bpm;
    let s1s2 = cfg.s1_to_s2_s();
    ensure!(
        s1s2 > S1_DURATION_S,
        Generation,
        "systole would be empty at {} bpm",
        cfg.heart_rate_bpm
    );

    let n_beats = (cfg.duration_s / period).ceil() as usize + 4;
    let mut jitter: Vec<f64> = (0..n_beats).map(|_| rng.sample(StandardNormal)).collect();
    let t0 = -rng.gen_range(0.0..period);
    let place = |jitter: &[f64]| -> Vec<f64> {
        let mut t = t0;
        let mut out = vec![t];
        for j in jitter {
            t += period + j;
            out.push(t);
        }
        out
    };
    let round = |v: f64| (v * fs).round() / fs;
    let inside = |b: &[f64]| -> (usize, usize) {
        let first = b.iter().position(|&t| round(t) > 0.0).expect("beats start before 0");
        let last = b.iter().rposition(|&t| round(t) < cfg.duration_s).expect("beats start before the end");
        (first, last)
    };
    // The S1-to-S1 intervals inside the recording get exactly
    // `rhythm_jitter_s` population spread. Their sum is preserved, so the
    // same beats stay inside.
    rescale_spread(&mut jitter, cfg.rhythm_jitter_s);
    let mean = jitter.iter().sum::<f64>() / n_beats as f64;
    jitter.iter_mut().for_each(|j| *j -= mean);
    let (a, b) = inside(&place(&jitter));
    if b > a + 1 {
        rescale_spread(&mut jitter[a..b], cfg.rhythm_jitter_s);
    }
    let beat_times = place(&jitter);
    ensure!(
        *beat_times.last().expect("non-empty") >= cfg.duration_s,
        Generation,
        "beats do not cover the recording (seed {})",
        cfg.seed
    );
    let (_, b) = inside(&beat_times);
    let beats: Vec<f64> = beat_times[..=b].to_vec();
    for (k, w) in beat_times[..=b + 1].windows(2).enumerate() {
        let interval = w[1] - w[0];
        ensure!(
            interval > s1s2 + S2_DURATION_S + 0.02,
            Generation,
            "beat {k} interval {interval:.3} s leaves no diastole (seed {})",
            cfg.seed
        );
    }
    let mut onsets: Vec<(f64, HeartState)> = Vec::new();
    for &t in &beats {
        for (dt, st) in [
            (0.0, HeartState::S1),
            (S1_DURATION_S, HeartState::Systole),
            (s1s2, HeartState::S2),
            (s1s2 + S2_DURATION_S, HeartState::Diastole),
        ] {
            onsets.push((t + dt, st));
        }
    }

    // Keep onsets inside the recording, rounded to the sample grid; the
    // state active at 0 becomes the first entry.
    onsets.iter_mut().for_each(|o| o.0 = round(o.0));
    let first = onsets.iter().rposition(|o| o.0 <= 0.0).expect("first beat starts at or before 0");
    let mut ann_onsets = vec![(0.0, onsets[first].1)];
    ann_onsets.extend(onsets[first + 1..].iter().copied().filter(|&(t, _)| t < cfg.duration_s));
    let ann = Annotation::new(ann_onsets)?;

    let n = (cfg.duration_s * fs).round() as usize;
    let mut x = vec![0.0; n];
    for &b in &beats {
        let amp = 1.0 + 0.1 * rng.gen_range(-1.0..1.0);
        add_sound(&mut x, fs, b, S1_DURATION_S, rng.gen_range(38.0..46.0), amp, rng.gen_range(0.0..2.0 * PI));
        let amp2 = cfg.s2_gain * (1.0 + 0.1 * rng.gen_range(-1.0..1.0));
        add_sound(&mut x, fs, b + s1s2, S2_DURATION_S, rng.gen_range(45.0..55.0), amp2, rng.gen_range(0.0..2.0 * PI));
    }

    let states: Vec<HeartState> = (0..n).map(|i| ann.state_at(i as f64 / fs).expect("non-empty")).collect();
    let is_sound = |s: HeartState| matches!(s, HeartState::S1 | HeartState::S2);
    if cfg.murmur_level > 0.0 {
        let raw: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let sos = butter_bandpass(MURMUR_BAND_HZ.0, MURMUR_BAND_HZ.1, fs)?;
        let band = sosfiltfilt(&sos, &raw);
        // Gate to systole and diastole with 10 ms linear ramps.
        let mut gate: Vec<f64> = states.iter().map(|&s| if is_sound(s) { 0.0 } else { 1.0 }).collect();
        let ramp = 10;
        let hard = gate.clone();
        for i in 0..n {
            let lo = i.saturating_sub(ramp);
            let hi = (i + ramp + 1).min(n);
            gate[i] = hard[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        }
        let power = |v: &[f64], sel: &dyn Fn(HeartState) -> bool| {
            let (s, c) = v
                .iter()
                .zip(&states)
                .filter(|(_, &st)| sel(st))
                .fold((0.0, 0usize), |(s, c), (x, _)| (s + x * x, c + 1));
            if c == 0 {
                0.0
            } else {
                s / c as f64
            }
        };
        let murmur: Vec<f64> = band.iter().zip(&gate).map(|(b, g)| b * g).collect();
        let sound_power = power(&x, &|s| is_sound(s));
        let murmur_power = power(&murmur, &|s| !is_sound(s));
        if murmur_power > 0.0 {
            let k = (cfg.murmur_level * sound_power / murmur_power).sqrt();
            x.iter_mut().zip(&murmur).for_each(|(v, m)| *v += k * m);
        }
    }

    let signal_power = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let noise_sd = (signal_power / 10f64.powf(cfg.noise_snr_db / 10.0)).sqrt();
    for v in &mut x {
        *v += noise_sd * rng.sample::<f64, _>(StandardNormal);
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::Generation(format!("degenerate waveform (seed {})", cfg.seed)));
    }
    x.iter_mut().for_each(|v| *v *= OUTPUT_PEAK / peak);
    Ok((Recording::new(format!("synth_{}", cfg.seed), x, MODEL_RATE_HZ), ann))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{characterize, compute_indicators};

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            seed: 11,
            murmur_level: 0.3,
            rhythm_jitter_s: 0.05,
            ..Default::default()
        };
        let (a, aa) = synth_pcg(&cfg).unwrap();
        let (b, bb) = synth_pcg(&cfg).unwrap();
        assert_eq!(a.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(aa, bb);
        let (c, _) = synth_pcg(&SynthConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn clean_recording_has_low_noise_indicator() {
        let (rec, ann) = synth_pcg(&SynthConfig {
            seed: 3,
            noise_snr_db: 40.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(rec.len(), 10_000);
        let ind = compute_indicators(&rec, &ann).unwrap();
        assert!(ind.d_noise_murmur < 0.3, "{ind:?}");
        assert!(ind.f_s2 > 2.0);
        assert!(ind.d_rhythm < 1e-3);
    }

    #[test]
    fn jitter_sets_arrhythmia_flag() {
        let (rec, ann) = synth_pcg(&SynthConfig {
            seed: 5,
            heart_rate_bpm: 50.0,
            rhythm_jitter_s: 0.15,
            ..Default::default()
        })
        .unwrap();
        assert!(characterize(&rec, &ann).unwrap().arrhythmia);
        let d = compute_indicators(&rec, &ann).unwrap().d_rhythm;
        assert!((d - 0.15).abs() < 2e-3, "d_rhythm {d}");
    }

    #[test]
    fn murmur_level_drives_noise_indicator() {
        let nm = |level| {
            let (rec, ann) = synth_pcg(&SynthConfig {
                seed: 9,
                murmur_level: level,
                noise_snr_db: 40.0,
                ..Default::default()
            })
            .unwrap();
            compute_indicators(&rec, &ann).unwrap().d_noise_murmur
        };
        let (lo, hi) = (nm(0.2), nm(1.5));
        assert!(lo < 0.4 && hi > 1.0, "{lo} {hi}");
    }

    #[test]
    fn annotation_cycles_and_increases() {
        let (_, ann) = synth_pcg(&SynthConfig {
            seed: 1,
            rhythm_jitter_s: 0.08,
            ..Default::default()
        })
        .unwrap();
        let o = ann.onsets();
        assert_eq!(o[0].0, 0.0);
        assert!(o.len() > 40);
        assert!(o.iter().all(|&(t, _)| t < 10.0));
    }

    #[test]
    fn impossible_timing_is_an_error() {
        let r = synth_pcg(&SynthConfig {
            heart_rate_bpm: 240.0,
            ..Default::default()
        });
        assert!(matches!(r, Err(Error::Generation(_))));
        assert!(synth_pcg(&SynthConfig {
            duration_s: 5.0,
            ..Default::default()
        })
        .is_err());
    }
}
