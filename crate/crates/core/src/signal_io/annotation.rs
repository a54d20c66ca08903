use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Cardiac cycle states, in cycle order. The discriminant is the class
/// index used by the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeartState {
    S1 = 0,
    Systole = 1,
    S2 = 2,
    Diastole = 3,
}

impl HeartState {
    pub const ALL: [HeartState; 4] = [HeartState::S1, HeartState::Systole, HeartState::S2, HeartState::Diastole];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn next(self) -> Self {
        Self::ALL[(self.index() + 1) % 4]
    }

    pub fn prev(self) -> Self {
        Self::ALL[(self.index() + 3) % 4]
    }

    pub fn name(self) -> &'static str {
        match self {
            HeartState::S1 => "S1",
            HeartState::Systole => "systole",
            HeartState::S2 => "S2",
            HeartState::Diastole => "diastole",
        }
    }
}

impl fmt::Display for HeartState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeartState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::Format(format!("unknown state {s:?}; expected S1, systole, S2 or diastole")))
    }
}

/// Onsets of cardiac states: strictly increasing times whose states follow
/// the cycle S1 -> systole -> S2 -> diastole -> S1.
#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    onsets: Vec<(f64, HeartState)>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    onset_seconds: f64,
    state: String,
}

impl Annotation {
    pub fn new(onsets: Vec<(f64, HeartState)>) -> Result<Self> {
        for (i, &(t, _)) in onsets.iter().enumerate() {
            ensure!(t.is_finite() && t >= 0.0, Format, "onset {i} has invalid time {t}");
        }
        for (i, w) in onsets.windows(2).enumerate() {
            ensure!(
                w[1].0 > w[0].0,
                Format,
                "onset times must be strictly increasing ({} then {} at entry {})",
                w[0].0,
                w[1].0,
                i + 1
            );
            ensure!(
                w[1].1 == w[0].1.next(),
                Format,
                "{} cannot follow {} (entry {})",
                w[1].1,
                w[0].1,
                i + 1
            );
        }
        Ok(Annotation { onsets })
    }

    pub fn onsets(&self) -> &[(f64, HeartState)] {
        &self.onsets
    }

    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }

    /// Onset times of one state.
    pub fn times_of(&self, state: HeartState) -> Vec<f64> {
        self.onsets.iter().filter(|o| o.1 == state).map(|o| o.0).collect()
    }

    /// State active at time `t`; an onset exactly at `t` counts as active.
    /// Before the first onset, the state cyclically preceding it.
    pub fn state_at(&self, t: f64) -> Option<HeartState> {
        let first = self.onsets.first()?;
        let k = self.onsets.partition_point(|o| o.0 <= t);
        Some(if k == 0 { first.1.prev() } else { self.onsets[k - 1].1 })
    }

    pub fn from_csv_reader<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers().map_err(|e| Error::Format(format!("annotation header: {e}")))?;
        ensure!(
            headers.iter().collect::<Vec<_>>() == ["onset_seconds", "state"],
            Format,
            "annotation header must be `onset_seconds,state`, got {:?}",
            headers
        );
        let mut onsets = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| Error::Format(format!("annotation row: {e}")))?;
            onsets.push((row.onset_seconds, row.state.parse()?));
        }
        Self::new(onsets)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(f).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for &(t, s) in &self.onsets {
            w.serialize(Row {
                onset_seconds: t,
                state: s.name().to_string(),
            })
            .expect("in-memory write");
        }
        // Header is emitted by serialize; an empty annotation still needs it.
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        if body.is_empty() {
            "onset_seconds,state\n".to_string()
        } else {
            body
        }
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Per-frame state labels.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSequence {
    pub labels: Vec<HeartState>,
    pub frame_ms: f64,
}

impl StateSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Onsets at frame starts where the state changes, plus the state of
    /// frame 0 at time 0.
    pub fn onsets(&self) -> Vec<(f64, HeartState)> {
        let dt = self.frame_ms / 1000.0;
        let mut out = Vec::new();
        for (i, &s) in self.labels.iter().enumerate() {
            if i == 0 || s != self.labels[i - 1] {
                out.push((i as f64 * dt, s));
            }
        }
        out
    }

    /// Class indices as `f32` one-hot rows `[T, 4]`, flattened.
    pub fn one_hot(&self) -> Vec<f32> {
        let mut v = vec![0.0; self.labels.len() * 4];
        for (row, s) in v.chunks_exact_mut(4).zip(&self.labels) {
            row[s.index()] = 1.0;
        }
        v
    }
}

/// Labels frames of `frame_ms` by the state active at each frame's
/// midpoint. The frame count is `floor(duration / frame)`.
pub fn annotation_to_frames(ann: &Annotation, duration_s: f64, frame_ms: f64) -> Result<StateSequence> {
    ensure!(!ann.is_empty(), EmptyInput, "annotation has no onsets");
    ensure!(frame_ms > 0.0 && duration_s >= 0.0, InvalidArgument, "frame length must be positive and duration non-negative");
    let dt = frame_ms / 1000.0;
    let n = (duration_s / dt + 1e-9).floor() as usize;
    let labels = (0..n)
        .map(|i| ann.state_at((i as f64 + 0.5) * dt).expect("non-empty"))
        .collect();
    Ok(StateSequence { labels, frame_ms })
}
