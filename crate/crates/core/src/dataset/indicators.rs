use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::signal_io::{Annotation, HeartState, Recording};

/// Recording difficulty indicators. Powers are mean squared amplitudes;
/// `d_rhythm` and `d_rate` are in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    pub w_total: f64,
    pub w_s1: f64,
    pub w_sys: f64,
    pub w_s2: f64,
    pub w_dia: f64,
    pub f_s2: f64,
    pub d_noise_murmur: f64,
    pub d_rhythm: f64,
    pub d_rate: f64,
}

/// Spread of S1-to-S1 intervals: `sqrt(sum (ss - E)^2 / (M - 1))` over the
/// `M - 1` intervals of `M` beats.
pub fn d_rhythm(intervals: &[f64]) -> Result<f64> {
    ensure!(!intervals.is_empty(), Undefined, "rhythm needs at least two S1 onsets");
    let m1 = intervals.len() as f64;
    let e = intervals.iter().sum::<f64>() / m1;
    Ok((intervals.iter().map(|s| (s - e) * (s - e)).sum::<f64>() / m1).sqrt())
}

/// Heart-rate abnormality with a dead zone for mean intervals between
/// 0.6 s and 1.2 s: `|max(1.2, E) + min(0.6, E) - 1.8|`.
///
/// Evaluated piecewise so the dead zone is exactly zero in floating point.
pub fn d_rate(mean_interval: f64) -> f64 {
    if mean_interval > 1.2 {
        mean_interval - 1.2
    } else if mean_interval < 0.6 {
        0.6 - mean_interval
    } else {
        0.0
    }
}

/// Per-sample state labels of a recording from its annotation.
pub fn sample_states(rec: &Recording, ann: &Annotation) -> Result<Vec<HeartState>> {
    ensure!(!ann.is_empty(), EmptyInput, "annotation of {} is empty", rec.id);
    let fs = rec.sample_rate_hz as f64;
    Ok((0..rec.len())
        .map(|i| ann.state_at(i as f64 / fs).expect("non-empty annotation"))
        .collect())
}

pub fn compute_indicators(rec: &Recording, ann: &Annotation) -> Result<Indicators> {
    ensure!(!rec.is_empty(), EmptyInput, "recording {} is empty", rec.id);
    let states = sample_states(rec, ann)?;
    let mut sum = [0.0f64; 4];
    let mut count = [0usize; 4];
    for (&x, s) in rec.samples.iter().zip(&states) {
        sum[s.index()] += x * x;
        count[s.index()] += 1;
    }
    let w = |s: HeartState| {
        let i = s.index();
        if count[i] == 0 {
            0.0
        } else {
            sum[i] / count[i] as f64
        }
    };
    let w_total = sum.iter().sum::<f64>() / rec.len() as f64;
    let (w_s1, w_sys, w_s2, w_dia) = (
        w(HeartState::S1),
        w(HeartState::Systole),
        w(HeartState::S2),
        w(HeartState::Diastole),
    );
    let ratio = |num: f64, den: f64, what: &str| {
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(Error::Undefined(format!("{what}: zero denominator power in {}", rec.id)))
        }
    };
    let f_s2 = ratio(w_s2, w_dia, "F_S2")?;
    let d_noise_murmur = ratio(w_sys + w_dia, w_s1 + w_s2, "D_noise&murmur")?;

    // An entry at exactly 0 s marks the state in progress when the recording
    // starts, not an observed onset, so it is left out of the beat timing.
    let s1: Vec<f64> = ann.times_of(HeartState::S1).into_iter().filter(|&t| t > 0.0).collect();
    ensure!(s1.len() >= 2, Undefined, "{} has {} S1 onsets; rhythm and rate need two", rec.id, s1.len());
    let intervals: Vec<f64> = s1.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
    Ok(Indicators {
        w_total,
        w_s1,
        w_sys,
        w_s2,
        w_dia,
        f_s2,
        d_noise_murmur,
        d_rhythm: d_rhythm(&intervals)?,
        d_rate: d_rate(mean),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "LEVEL_I")]
    I,
    #[serde(rename = "LEVEL_II")]
    II,
    #[serde(rename = "LEVEL_III")]
    III,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::I, Level::II, Level::III];

    pub fn name(self) -> &'static str {
        match self {
            Level::I => "LEVEL_I",
            Level::II => "LEVEL_II",
            Level::III => "LEVEL_III",
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Partition thresholds of the difficulty plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRules {
    pub noise_murmur_high: f64,
    pub rhythm_rate_high: f64,
    /// LEVEL_I additionally needs noise/murmur at or below this.
    pub noise_murmur_clean: f64,
}

impl Default for LevelRules {
    fn default() -> Self {
        LevelRules {
            noise_murmur_high: 0.8,
            rhythm_rate_high: 0.2,
            noise_murmur_clean: 0.3,
        }
    }
}

pub fn assign_level_with(ind: &Indicators, rules: &LevelRules) -> Level {
    let nm = ind.d_noise_murmur;
    let rr = ind.d_rhythm + ind.d_rate;
    if nm > rules.noise_murmur_high && rr > rules.rhythm_rate_high {
        Level::III
    } else if nm <= rules.noise_murmur_clean && rr <= rules.rhythm_rate_high {
        Level::I
    } else {
        Level::II
    }
}

pub fn assign_level(ind: &Indicators) -> Level {
    assign_level_with(ind, &LevelRules::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub high_noise_murmur: bool,
    pub arrhythmia: bool,
    pub abnormal_hr: bool,
    pub vague_s2: bool,
}

pub fn flags(ind: &Indicators) -> Flags {
    Flags {
        high_noise_murmur: ind.d_noise_murmur > 0.8,
        arrhythmia: ind.d_rhythm > 0.12,
        abnormal_hr: ind.d_rate > 0.0,
        vague_s2: ind.f_s2 <= 2.0,
    }
}

pub fn characterize(rec: &Recording, ann: &Annotation) -> Result<Flags> {
    compute_indicators(rec, ann).map(|i| flags(&i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use HeartState::*;

    fn ind(nm: f64, rhythm: f64, rate: f64) -> Indicators {
        Indicators {
            w_total: 1.0,
            w_s1: 1.0,
            w_sys: 0.1,
            w_s2: 1.0,
            w_dia: 0.1,
            f_s2: 10.0,
            d_noise_murmur: nm,
            d_rhythm: rhythm,
            d_rate: rate,
        }
    }

    #[test]
    fn rate_dead_zone_and_rhythm_example() {
        assert_eq!(d_rate(0.9), 0.0);
        assert!((d_rate(1.5) - 0.3).abs() < 1e-12);
        assert!((d_rate(0.5) - 0.1).abs() < 1e-12);
        assert!((d_rhythm(&[0.6, 1.0]).unwrap() - 0.2).abs() < 1e-12);
        assert!(d_rhythm(&[]).is_err());
    }

    #[test]
    fn level_examples() {
        assert_eq!(assign_level(&ind(0.1, 0.0, 0.0)), Level::I);
        assert_eq!(assign_level(&ind(0.9, 0.3, 0.2)), Level::III);
        assert_eq!(assign_level(&ind(0.5, 0.1, 0.0)), Level::II);
        assert_eq!(assign_level(&ind(0.9, 0.1, 0.0)), Level::II);
        assert_eq!(assign_level(&ind(0.1, 0.3, 0.0)), Level::II);
    }

    #[test]
    fn flag_thresholds() {
        let mut i = ind(0.1, 0.15, 0.0);
        i.f_s2 = 3.0;
        let f = flags(&i);
        assert!(f.arrhythmia && !f.vague_s2 && !f.abnormal_hr && !f.high_noise_murmur);
        i.f_s2 = 2.0;
        assert!(flags(&i).vague_s2);
    }

    fn toy() -> (Recording, Annotation) {
        // Three cycles at 100 Hz: S1 amplitude 1, systole 0.1, S2 0.5, diastole 0.2.
        let mut onsets = Vec::new();
        let mut x = Vec::new();
        for start in [0.0, 1.0, 2.0] {
            for (dt, st, amp, n) in [(0.0, S1, 1.0, 10), (0.1, Systole, 0.1, 20), (0.3, S2, 0.5, 10), (0.4, Diastole, 0.2, 60)] {
                onsets.push((start + dt, st));
                x.extend((0..n).map(|i| if i % 2 == 0 { amp } else { -amp }));
            }
        }
        (Recording::new("toy", x, 100), Annotation::new(onsets).unwrap())
    }

    #[test]
    fn indicators_on_toy_recording() {
        let (rec, ann) = toy();
        let i = compute_indicators(&rec, &ann).unwrap();
        assert!((i.w_s1 - 1.0).abs() < 1e-12);
        assert!((i.w_sys - 0.01).abs() < 1e-12);
        assert!((i.w_s2 - 0.25).abs() < 1e-12);
        assert!((i.w_dia - 0.04).abs() < 1e-12);
        assert!((i.f_s2 - 6.25).abs() < 1e-12);
        assert!((i.d_noise_murmur - 0.05 / 1.25).abs() < 1e-12);
        assert_eq!(i.d_rhythm, 0.0);
        assert_eq!(i.d_rate, 0.0);
    }

    #[test]
    fn scale_covariance() {
        let (rec, ann) = toy();
        let a = compute_indicators(&rec, &ann).unwrap();
        let scaled = rec.with_samples(rec.samples.iter().map(|v| 3.0 * v).collect());
        let b = compute_indicators(&scaled, &ann).unwrap();
        assert!((b.w_total - 9.0 * a.w_total).abs() < 1e-12);
        assert!((b.w_s1 - 9.0 * a.w_s1).abs() < 1e-12);
        for (x, y) in [(a.f_s2, b.f_s2), (a.d_noise_murmur, b.d_noise_murmur), (a.d_rhythm, b.d_rhythm), (a.d_rate, b.d_rate)] {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_s1_is_undefined() {
        let rec = Recording::new("r", vec![0.5; 100], 100);
        let ann = Annotation::new(vec![(0.0, S1), (0.1, Systole), (0.3, S2), (0.4, Diastole)]).unwrap();
        assert!(matches!(compute_indicators(&rec, &ann), Err(Error::Undefined(_))));
    }
}
