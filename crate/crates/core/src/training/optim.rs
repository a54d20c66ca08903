use crate::autodiff::{NamedTensors, Real, Tensor};
use crate::error::{ensure, Error, Result};

/// Parameters, momentum buffers and early-stopping bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<F: Real = f32> {
    pub params: NamedTensors<F>,
    pub velocity: NamedTensors<F>,
    /// Completed epochs.
    pub epoch: usize,
    pub best_accuracy: f64,
    pub epochs_since_best: usize,
    pub seed: u64,
}

impl<F: Real> TrainState<F> {
    pub fn new(params: NamedTensors<F>, seed: u64) -> Self {
        let velocity = NamedTensors {
            entries: params
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        };
        TrainState {
            params,
            velocity,
            epoch: 0,
            best_accuracy: f64::NEG_INFINITY,
            epochs_since_best: 0,
            seed,
        }
    }

    /// `θ + μ·v`, where the next gradient is evaluated.
    pub fn lookahead(&self, momentum: f64) -> NamedTensors<F> {
        let mu = F::lit(momentum);
        let mut out = self.params.clone();
        for ((_, p), (_, v)) in out.entries.iter_mut().zip(&self.velocity.entries) {
            for (a, &b) in p.data_mut().iter_mut().zip(v.data()) {
                *a += mu * b;
            }
        }
        out
    }
}

/// Nesterov momentum in lookahead form, with `grads` taken at
/// [`TrainState::lookahead`]: `v ← μ·v − lr·g`, `θ ← θ + v`.
pub fn nesterov_step<F: Real>(state: &mut TrainState<F>, grads: &[Tensor<F>], lr: f64, momentum: f64) -> Result<()> {
    ensure!(
        grads.len() == state.params.entries.len(),
        ShapeMismatch,
        "{} gradients for {} parameters",
        grads.len(),
        state.params.entries.len()
    );
    for ((name, p), g) in state.params.entries.iter().zip(grads) {
        ensure!(
            g.shape() == p.shape(),
            ShapeMismatch,
            "gradient of {name} is {:?}, parameter is {:?}",
            g.shape(),
            p.shape()
        );
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {name}[{i}] is {} at epoch {}",
                g.data()[i],
                state.epoch + 1
            )));
        }
    }
    let (lr, mu) = (F::lit(lr), F::lit(momentum));
    for (((_, p), (_, v)), g) in state.params.entries.iter_mut().zip(state.velocity.entries.iter_mut()).zip(grads) {
        for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vv = mu * *vv - lr * gv;
            *pv += *vv;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

/// Updates the best-accuracy bookkeeping after an epoch. Only a strictly
/// higher accuracy counts as an improvement; training stops once `patience`
/// consecutive epochs bring none.
pub fn observe_epoch<F: Real>(state: &mut TrainState<F>, val_accuracy: f64, patience: usize) -> StopDecision {
    state.epoch += 1;
    let improved = val_accuracy > state.best_accuracy;
    if improved {
        state.best_accuracy = val_accuracy;
        state.epochs_since_best = 0;
    } else {
        state.epochs_since_best += 1;
    }
    StopDecision {
        improved,
        stop: state.epochs_since_best >= patience,
    }
}
