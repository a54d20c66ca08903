use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::{ensure, Result};

/// Weights of the classification and transition terms. Logarithms are
/// natural; probabilities are clipped below at `prob_floor` before use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub c1: f64,
    pub c2: f64,
    pub prob_floor: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            c1: 1.0,
            c2: 2.0,
            prob_floor: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.c1 >= 0.0 && self.c2 >= 0.0 && self.c1 + self.c2 > 0.0,
            InvalidArgument,
            "loss weights must be non-negative and not both zero (c1 = {}, c2 = {})",
            self.c1,
            self.c2
        );
        ensure!(
            self.prob_floor > 0.0 && self.prob_floor <= 1e-3,
            InvalidArgument,
            "prob_floor must be in (0, 1e-3], got {}",
            self.prob_floor
        );
        Ok(())
    }
}

fn softmax_row(z: &[f64], out: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

/// Loss value and its gradient with respect to the logits, both in f64.
///
/// `logits` and `labels` are `[N, T, K]`; the loss is averaged over the
/// `N * T * K` terms. Frame 0 is paired with a copy of itself in the
/// transition term.
pub fn loss_and_grad(logits: &[f64], labels: &[f64], shape: [usize; 3], cfg: &LossConfig) -> (f64, Vec<f64>) {
    let [n, t, k] = shape;
    let scale = 1.0 / (n * t * k) as f64;
    let floor = cfg.prob_floor;
    let mut p = vec![0.0; logits.len()];
    for (zr, pr) in logits.chunks_exact(k).zip(p.chunks_exact_mut(k)) {
        softmax_row(zr, pr);
    }
    let pc: Vec<f64> = p.iter().map(|&v| v.max(floor)).collect();

    let mut total = 0.0;
    // dL/d(clipped probability)
    let mut gpc = vec![0.0; p.len()];
    for b in 0..n {
        for tau in 0..t {
            let prev = tau.saturating_sub(1);
            for i in 0..k {
                let cur = (b * t + tau) * k + i;
                let old = (b * t + prev) * k + i;
                let y = labels[cur];
                let mean_y = 0.5 * (y + labels[old]);
                let mean_p = 0.5 * (pc[cur] + pc[old]);
                total += cfg.c1 * y * pc[cur].ln() + cfg.c2 * mean_y * mean_p.ln();
                gpc[cur] -= scale * cfg.c1 * y / pc[cur];
                let g_mean = -scale * cfg.c2 * mean_y / mean_p;
                gpc[cur] += 0.5 * g_mean;
                gpc[old] += 0.5 * g_mean;
            }
        }
    }
    let loss = -scale * total;

    let mut grad = vec![0.0; p.len()];
    for ((gr, pr), gcr) in grad.chunks_exact_mut(k).zip(p.chunks_exact(k)).zip(gpc.chunks_exact(k)) {
        // Clipped coordinates pass no gradient.
        let gp: Vec<f64> = gcr.iter().zip(pr).map(|(&g, &pv)| if pv >= floor { g } else { 0.0 }).collect();
        let inner: f64 = gp.iter().zip(pr).map(|(a, b)| a * b).sum();
        for ((o, &g), &pv) in gr.iter_mut().zip(&gp).zip(pr) {
            *o = pv * (g - inner);
        }
    }
    (loss, grad)
}

/// Classification plus state-transition loss on the tape. `labels` is a
/// one-hot constant of the same `[N, T, K]` shape as `logits`.
pub fn transition_loss<F: Real>(tape: &mut Tape<F>, logits: Var, labels: &Tensor<F>, cfg: &LossConfig) -> Result<Var> {
    cfg.validate()?;
    let shape = tape.shape(logits).to_vec();
    ensure!(
        shape.len() == 3 && shape.iter().all(|&d| d > 0),
        ShapeMismatch,
        "loss expects non-empty logits [N, T, K], got {shape:?}"
    );
    ensure!(
        labels.shape() == shape.as_slice(),
        ShapeMismatch,
        "labels {:?} do not match logits {shape:?}",
        labels.shape()
    );
    let k = shape[2];
    ensure!(
        labels.data().chunks_exact(k).all(|row| {
            let ones = row.iter().filter(|v| v.as_f64() == 1.0).count();
            let zeros = row.iter().filter(|v| v.as_f64() == 0.0).count();
            ones == 1 && zeros == k - 1
        }),
        InvalidArgument,
        "labels must be one-hot"
    );
    let z: Vec<f64> = tape.value(logits).data().iter().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = labels.data().iter().map(|v| v.as_f64()).collect();
    let (loss, grad) = loss_and_grad(&z, &y, [shape[0], shape[1], shape[2]], cfg);
    let grad = Tensor::new(shape, grad.into_iter().map(F::lit).collect())?;
    Ok(tape.record(
        Tensor::scalar(F::lit(loss)),
        vec![logits],
        Box::new(move |g, _, _| {
            let s = g.data()[0];
            let mut d = grad.clone();
            d.data_mut().iter_mut().for_each(|v| *v *= s);
            vec![Some(d)]
        }),
    ))
}

/// Share of frames whose arg-max logit matches the label.
pub fn frame_accuracy<F: Real>(logits: &Tensor<F>, labels: &[usize]) -> Result<f64> {
    let k = logits.last_dim();
    ensure!(
        logits.numel() == labels.len() * k && !labels.is_empty(),
        ShapeMismatch,
        "{} labels for logits {:?}",
        labels.len(),
        logits.shape()
    );
    let hits = logits
        .data()
        .chunks_exact(k)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Lowest index of the maximum.
pub(crate) fn argmax<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{check_gradients, random_tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_hot(states: &[usize]) -> Vec<f64> {
        states.iter().flat_map(|&s| (0..4).map(move |k| if k == s { 1.0 } else { 0.0 })).collect()
    }

    /// Term-by-term scalar evaluation straight from probabilities.
    fn oracle(probs: &[[f64; 4]], truth: &[usize], c1: f64, c2: f64) -> f64 {
        let t = probs.len();
        let y = |m: usize, i: usize| if truth[m] == i { 1.0 } else { 0.0 };
        let mut s = 0.0;
        for m in 0..t {
            let q = if m == 0 { 0 } else { m - 1 };
            for i in 0..4 {
                s += c1 * y(m, i) * probs[m][i].ln();
                s += c2 * (y(m, i) + y(q, i)) / 2.0 * ((probs[m][i] + probs[q][i]) / 2.0).ln();
            }
        }
        -s / (4.0 * t as f64)
    }

    fn loss_of(z: &[f64], truth: &[usize]) -> f64 {
        let t = truth.len();
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![1, t, 4], z.to_vec()).unwrap(), true);
        let y = Tensor::new(vec![1, t, 4], one_hot(truth)).unwrap();
        let l = transition_loss(&mut tape, x, &y, &LossConfig::default()).unwrap();
        tape.value(l).data()[0]
    }

    #[test]
    fn single_perfect_frame_is_zero() {
        assert!(loss_of(&[200.0, 0.0, 0.0, 0.0], &[0]).abs() < 1e-12);
    }

    #[test]
    fn perfect_two_frames() {
        let l = loss_of(&[200.0, 0.0, 0.0, 0.0, 0.0, 200.0, 0.0, 0.0], &[0, 1]);
        assert!((l - 0.173287).abs() < 1e-6, "{l}");
        assert!((l - 2f64.ln() / 4.0).abs() < 1e-6);
    }

    #[test]
    fn uniform_prediction_matches_oracle() {
        for truth in [[0usize, 0], [0, 1], [3, 0], [2, 2]] {
            let l = loss_of(&[0.0; 8], &truth);
            let want = oracle(&[[0.25; 4]; 2], &truth, 1.0, 2.0);
            assert!((l - want).abs() < 1e-12, "{truth:?}: {l} vs {want}");
        }
    }

    #[test]
    fn random_logits_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let truth: Vec<usize> = (0..6).map(|_| rng.gen_range(0..4)).collect();
            let z: Vec<f64> = (0..24).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let probs: Vec<[f64; 4]> = z
                .chunks(4)
                .map(|r| {
                    let e: Vec<f64> = r.iter().map(|v| v.exp()).collect();
                    let s: f64 = e.iter().sum();
                    [e[0] / s, e[1] / s, e[2] / s, e[3] / s]
                })
                .collect();
            assert!((loss_of(&z, &truth) - oracle(&probs, &truth, 1.0, 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, t) = (4, 5);
        let truth: Vec<usize> = (0..n * t).map(|_| rng.gen_range(0..4)).collect();
        let labels = Tensor::new(vec![n, t, 4], one_hot(&truth)).unwrap();
        let z = random_tensor(&[n, t, 4], 2.0, &mut rng);
        let r = check_gradients(
            &[z],
            |tape, v| transition_loss(tape, v[0], &labels, &LossConfig::default()),
            1e-6,
            200,
            1,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
        assert_eq!(r.checked, 80);
    }

    #[test]
    fn minimum_over_predictions_is_positive() {
        // Gradient descent on the logits of a T=2 instance with a state change
        // settles at the transition-term floor (ln 2)/4.
        let truth = [0usize, 1];
        let y = one_hot(&truth);
        let mut z = vec![0.0; 8];
        let cfg = LossConfig::default();
        let mut last = f64::INFINITY;
        for _ in 0..20_000 {
            let (l, g) = loss_and_grad(&z, &y, [1, 2, 4], &cfg);
            z.iter_mut().zip(&g).for_each(|(v, d)| *v -= 20.0 * d);
            last = l;
        }
        assert!(last > 0.17 && (last - 2f64.ln() / 4.0).abs() < 1e-3, "{last}");
    }

    #[test]
    fn rejects_bad_labels_and_config() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[1, 2, 4]), true);
        let soft = Tensor::new(vec![1, 2, 4], vec![0.5, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(transition_loss(&mut tape, x, &soft, &LossConfig::default()).is_err());
        let wrong = Tensor::new(vec![1, 1, 4], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(transition_loss(&mut tape, x, &wrong, &LossConfig::default()).is_err());
        let cfg = LossConfig { c1: 0.0, c2: 0.0, ..LossConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = LossConfig { prob_floor: 0.01, ..LossConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn accuracy_counts_argmax() {
        let z = Tensor::new(vec![1, 3, 4], vec![1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((frame_accuracy(&z, &[0, 1, 2]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }
}
