use std::ops::{Add, AddAssign};

use serde::Serialize;

use crate::error::{ensure, Result};
use crate::signal_io::{Annotation, HeartState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Predictions before the first true onset, already included in `fp`.
    pub pre_first_fp: u64,
}

impl Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            pre_first_fp: self.pre_first_fp + o.pre_first_fp,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

/// Counts for each state (indexed by [`HeartState::index`]) and pooled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CountingState {
    pub per_state: [Counts; 4],
}

impl CountingState {
    pub fn pooled(&self) -> Counts {
        self.per_state.iter().copied().sum()
    }
}

impl Add for CountingState {
    type Output = CountingState;
    fn add(self, o: CountingState) -> CountingState {
        let mut per_state = self.per_state;
        for (a, b) in per_state.iter_mut().zip(o.per_state) {
            *a += b;
        }
        CountingState { per_state }
    }
}

fn check_sorted(xs: &[f64], what: &str) -> Result<()> {
    ensure!(xs.iter().all(|v| v.is_finite()), InvalidArgument, "{what} onsets must be finite");
    ensure!(xs.windows(2).all(|w| w[0] <= w[1]), InvalidArgument, "{what} onsets are not sorted ascending");
    Ok(())
}

fn in_range(xs: &[f64], lo: f64, hi: f64) -> u64 {
    // [lo, hi) on a sorted slice
    let a = xs.partition_point(|&v| v < lo);
    let b = xs.partition_point(|&v| v < hi);
    b.saturating_sub(a) as u64
}

/// Onset matching for one state, `end_s` being the recording duration.
///
/// For each true onset `y_i`: predictions in `[y_i-σ, y_i+σ)` are its
/// candidates (one is a hit, extras are false positives, none is a miss);
/// predictions in the exclusion interval `[y_i+σ, y_{i+1}-σ)` are false
/// positives. The last onset's exclusion interval runs to `end_s - σ`, and
/// predictions in `[0, y_1-σ)` are also counted as false positives.
pub fn count_matches_until(truth: &[f64], pred: &[f64], sigma_s: f64, end_s: f64) -> Result<Counts> {
    ensure!(sigma_s > 0.0 && sigma_s.is_finite(), InvalidArgument, "tolerance must be positive, got {sigma_s}");
    check_sorted(truth, "true")?;
    check_sorted(pred, "predicted")?;
    let mut c = Counts::default();
    let first_edge = truth.first().map_or(end_s - sigma_s, |y| y - sigma_s);
    c.pre_first_fp = in_range(pred, 0.0, first_edge);
    c.fp += c.pre_first_fp;
    for (i, &y) in truth.iter().enumerate() {
        let n1 = in_range(pred, y - sigma_s, y + sigma_s);
        let next_edge = truth.get(i + 1).map_or(end_s, |&v| v) - sigma_s;
        let n2 = in_range(pred, y + sigma_s, next_edge);
        if n1 > 0 {
            c.tp += 1;
            c.fp += n1 - 1;
        } else {
            c.fn_ += 1;
        }
        c.fp += n2;
    }
    Ok(c)
}

/// [`count_matches_until`] with no recording end.
pub fn count_matches(truth: &[f64], pred: &[f64], sigma_s: f64) -> Result<Counts> {
    count_matches_until(truth, pred, sigma_s, f64::INFINITY)
}

/// Per-state matching of two annotations of the same recording.
///
/// Entries at exactly 0 s only record the state in progress when the
/// recording starts, so they are not scored on either side.
pub fn count_annotations(truth: &Annotation, pred: &Annotation, sigma_s: f64, duration_s: f64) -> Result<CountingState> {
    let mut out = CountingState::default();
    for s in HeartState::ALL {
        let keep = |a: &Annotation| -> Vec<f64> { a.times_of(s).into_iter().filter(|&t| t > 0.0).collect() };
        out.per_state[s.index()] = count_matches_until(&keep(truth), &keep(pred), sigma_s, duration_s)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Literal interval-membership oracle: for every prediction, test it
    /// against every interval.
    fn oracle(truth: &[f64], pred: &[f64], sigma: f64, end: f64) -> (u64, u64, u64) {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        let first = if truth.is_empty() { end - sigma } else { truth[0] - sigma };
        fp += pred.iter().filter(|&&p| 0.0 <= p && p < first).count() as u64;
        for i in 0..truth.len() {
            let y = truth[i];
            let next = if i + 1 < truth.len() { truth[i + 1] } else { end };
            let mut n1 = 0;
            let mut n2 = 0;
            for &p in pred {
                if y - sigma <= p && p < y + sigma {
                    n1 += 1;
                }
                if y + sigma <= p && p < next - sigma {
                    n2 += 1;
                }
            }
            if n1 > 0 {
                tp += 1;
            }
            if n1 > 1 {
                fp += n1 - 1;
            }
            if n1 == 0 {
                fn_ += 1;
            }
            fp += n2;
        }
        (tp, fp, fn_)
    }

    #[test]
    fn worked_example() {
        let c = count_matches(&[1.0, 2.0, 3.0], &[1.05, 2.5, 3.02], 0.1).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 1));
    }

    #[test]
    fn trivial_cases() {
        let t = [0.5, 1.2, 2.0];
        let c = count_matches(&t, &t, 0.1).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (3, 0, 0));
        let c = count_matches(&t, &[], 0.1).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 3));
        let c = count_matches(&[], &[0.3, 0.4], 0.1).unwrap();
        assert_eq!((c.fp, c.pre_first_fp), (2, 2));
    }

    #[test]
    fn interval_edges() {
        // Left edge inclusive, right edge exclusive (binary-exact values).
        let c = count_matches(&[1.0], &[0.875], 0.125).unwrap();
        assert_eq!((c.tp, c.fn_), (1, 0));
        let c = count_matches(&[1.0], &[1.125], 0.125).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 1, 1));
        // Before the first onset: flagged false positive.
        let c = count_matches(&[1.0], &[0.5, 1.0], 0.125).unwrap();
        assert_eq!((c.tp, c.fp, c.pre_first_fp), (1, 1, 1));
        // Beyond end - σ nothing is counted.
        let c = count_matches_until(&[1.0], &[1.0, 9.95], 0.1, 10.0).unwrap();
        assert_eq!(c.fp, 0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(count_matches(&[2.0, 1.0], &[], 0.1).is_err());
        assert!(count_matches(&[1.0], &[3.0, 2.0], 0.1).is_err());
        assert!(count_matches(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn matches_oracle_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut t: Vec<f64> = (0..rng.gen_range(0..12)).map(|_| rng.gen_range(0.0..10.0)).collect();
            let mut p: Vec<f64> = (0..rng.gen_range(0..15)).map(|_| rng.gen_range(0.0..10.0)).collect();
            t.sort_by(f64::total_cmp);
            p.sort_by(f64::total_cmp);
            let sigma = rng.gen_range(0.02..0.4);
            let c = count_matches_until(&t, &p, sigma, 10.0).unwrap();
            assert_eq!((c.tp, c.fp, c.fn_), oracle(&t, &p, sigma, 10.0));
        }
    }

    #[test]
    fn annotation_counts_skip_boundary_entries() {
        use HeartState::*;
        let truth = Annotation::new(vec![(0.0, Diastole), (0.5, S1), (0.62, Systole), (0.9, S2), (1.0, Diastole)]).unwrap();
        let pred = Annotation::new(vec![(0.0, S2), (0.06, Diastole), (0.52, S1), (0.64, Systole), (0.9, S2), (1.02, Diastole)]).unwrap();
        let c = count_annotations(&truth, &pred, 0.1, 2.0).unwrap();
        for s in [S1, Systole, S2] {
            assert_eq!(c.per_state[s.index()].tp, 1);
        }
        // The 0.06 s diastole onset precedes the first true one.
        let d = c.per_state[Diastole.index()];
        assert_eq!((d.tp, d.fp, d.fn_, d.pre_first_fp), (1, 1, 0, 1));
        let all = c.pooled();
        assert_eq!((all.tp, all.fp, all.fn_), (4, 1, 0));
    }

    fn sorted(v: Vec<f64>) -> Vec<f64> {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        v
    }

    proptest! {
        #[test]
        fn translation_invariant(t in prop::collection::vec(0.0f64..10.0, 0..10),
                                 p in prop::collection::vec(0.0f64..10.0, 0..10),
                                 shift in 0.0f64..5.0) {
            // Multiples of 1/64 keep the shifted comparisons exact.
            let q = |v: f64| (v * 64.0).round() / 64.0;
            let t = sorted(t.into_iter().map(q).collect());
            let p = sorted(p.into_iter().map(q).collect());
            let s = q(shift);
            let a = count_matches(&t, &p, 0.125).unwrap();
            let ts: Vec<f64> = t.iter().map(|v| v + s).collect();
            let ps: Vec<f64> = p.iter().map(|v| v + s).collect();
            let b = count_matches(&ts, &ps, 0.125).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn wider_tolerance_is_monotone(t in prop::collection::vec(0.0f64..10.0, 0..10),
                                       p in prop::collection::vec(0.0f64..10.0, 0..10),
                                       s1 in 0.01f64..0.3, ds in 0.0f64..0.3) {
            let t = sorted(t);
            let p = sorted(p);
            let a = count_matches(&t, &p, s1).unwrap();
            let b = count_matches(&t, &p, s1 + ds).unwrap();
            prop_assert!(b.tp >= a.tp && b.fn_ <= a.fn_);
        }

        #[test]
        fn self_match_is_perfect(gaps in prop::collection::vec(0.21f64..2.0, 1..12)) {
            let mut acc = 0.5;
            let t: Vec<f64> = gaps.iter().map(|g| { acc += g; acc }).collect();
            let c = count_matches(&t, &t, 0.1).unwrap();
            prop_assert_eq!((c.tp, c.fp, c.fn_), (t.len() as u64, 0, 0));
        }
    }
}
