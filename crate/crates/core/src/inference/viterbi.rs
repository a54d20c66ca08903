use crate::error::{ensure, Error, Result};
use crate::signal_io::{Annotation, HeartState, StateSequence};

/// Row-stochastic 4x4 state transition matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionMatrix {
    a: [[f64; 4]; 4],
}

impl TransitionMatrix {
    /// Stay with probability 0.5 or advance to the next state in the cycle
    /// S1 -> systole -> S2 -> diastole -> S1.
    pub fn cyclic() -> Self {
        let mut a = [[0.0; 4]; 4];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 0.5;
            row[(i + 1) % 4] = 0.5;
        }
        TransitionMatrix { a }
    }

    pub fn new(a: [[f64; 4]; 4]) -> Result<Self> {
        for (i, row) in a.iter().enumerate() {
            ensure!(
                row.iter().all(|v| v.is_finite() && *v >= 0.0),
                InvalidArgument,
                "transition row {i} has negative or non-finite entries"
            );
            let s: f64 = row.iter().sum();
            ensure!((s - 1.0).abs() <= 1e-9, InvalidArgument, "transition row {i} sums to {s}");
        }
        Ok(TransitionMatrix { a })
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.a[from][to]
    }

    pub fn allows(&self, from: HeartState, to: HeartState) -> bool {
        self.a[from.index()][to.index()] > 0.0
    }
}

impl Default for TransitionMatrix {
    fn default() -> Self {
        Self::cyclic()
    }
}

/// Decoded path and its log score `sum log p(s_m | m) + sum log A[s_{m-1}, s_m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ViterbiPath {
    pub states: Vec<HeartState>,
    pub log_prob: f64,
}

/// Viterbi over non-negative per-frame scores, without normalization checks.
/// Ties are broken toward the lowest state index, both when choosing a
/// predecessor and when choosing the final state.
pub fn viterbi_scores(scores: &[[f64; 4]], a: &TransitionMatrix) -> Result<ViterbiPath> {
    ensure!(!scores.is_empty(), EmptyInput, "no frames to decode");
    for (m, row) in scores.iter().enumerate() {
        ensure!(
            row.iter().all(|v| v.is_finite() && *v >= 0.0),
            InvalidArgument,
            "frame {m} has negative or non-finite scores"
        );
    }
    let log_a: Vec<[f64; 4]> = a.a.iter().map(|r| r.map(f64::ln)).collect();
    let n = scores.len();
    let mut q: [f64; 4] = scores[0].map(f64::ln);
    let mut back = vec![[0u8; 4]; n];
    for m in 1..n {
        let mut next = [f64::NEG_INFINITY; 4];
        for j in 0..4 {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0u8;
            for (i, qi) in q.iter().enumerate() {
                let v = qi + log_a[i][j];
                if v > best {
                    best = v;
                    arg = i as u8;
                }
            }
            next[j] = best + scores[m][j].ln();
            back[m][j] = arg;
        }
        q = next;
    }
    let mut last = 0;
    for j in 1..4 {
        if q[j] > q[last] {
            last = j;
        }
    }
    let log_prob = q[last];
    if log_prob == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument("every state path has zero probability".into()));
    }
    let mut states = vec![HeartState::S1; n];
    let mut s = last;
    for m in (0..n).rev() {
        states[m] = HeartState::from_index(s).expect("state index < 4");
        s = back[m][s] as usize;
    }
    Ok(ViterbiPath { states, log_prob })
}

/// Most probable state path for per-frame posteriors whose rows each sum
/// to 1 (within 1e-6).
pub fn viterbi_decode(probs: &[[f64; 4]], a: &TransitionMatrix) -> Result<ViterbiPath> {
    for (m, row) in probs.iter().enumerate() {
        let s: f64 = row.iter().sum();
        ensure!((s - 1.0).abs() <= 1e-6, InvalidArgument, "probability row {m} sums to {s}");
    }
    viterbi_scores(probs, a)
}

/// Onsets at the start of every run of equal states, the first run
/// included. Fails if two adjacent runs are not consecutive in the cycle.
pub fn states_to_onsets(seq: &StateSequence) -> Result<Annotation> {
    ensure!(!seq.is_empty(), EmptyInput, "empty state sequence");
    Annotation::new(seq.onsets())
}
