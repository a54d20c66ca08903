//! Central finite-difference checking of reverse-mode gradients.
//!
//! The numerical side only ever calls the forward function, so it is an
//! independent oracle for every backward implementation on the tape.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{ensure, Result};

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<Mismatch>,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Compares the tape gradient of the scalar `f(inputs)` with central
/// differences of step `step` on up to `coords` coordinates, sampled
/// across all inputs with a fixed seed (all coordinates when fewer exist).
pub fn check_gradients<Fun>(inputs: &[Tensor<f64>], f: Fun, step: f64, coords: usize, seed: u64) -> Result<GradCheckReport>
where
    Fun: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let out = f(&mut tape, &vars)?;
        ensure!(tape.value(out).numel() == 1, ShapeMismatch, "gradient check needs a scalar function");
        Ok(tape.value(out).data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| tape.grad(v).expect("leaf requires grad").clone()).collect();

    let offsets: Vec<usize> = inputs
        .iter()
        .scan(0, |acc, t| {
            let start = *acc;
            *acc += t.numel();
            Some(start)
        })
        .collect();
    let total: usize = inputs.iter().map(Tensor::numel).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = if total <= coords {
        (0..total).collect()
    } else {
        sample(&mut rng, total, coords).into_vec()
    };
    picks.sort_unstable();

    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for flat in picks {
        let input = offsets.partition_point(|&o| o <= flat) - 1;
        let index = flat - offsets[input];
        let orig = work[input].data()[index];
        work[input].data_mut()[index] = orig + step;
        let up = eval(&work)?;
        work[input].data_mut()[index] = orig - step;
        let down = eval(&work)?;
        work[input].data_mut()[index] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[input].data()[index];
        let err = relative_error(a, numeric);
        report.checked += 1;
        if err > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(err);
            report.worst = Some(Mismatch { input, index, analytic: a, numeric });
        }
    }
    Ok(report)
}

/// Reduces a tensor output to a scalar with fixed pseudo-random weights so
/// every output element contributes a distinct amount to the gradient.
pub fn random_projection(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = Tensor::from_fn(tape.shape(y), |_| rng.gen_range(-1.0..1.0));
    let r = tape.constant(weights);
    let prod = ops::mul(tape, y, r)?;
    Ok(ops::sum(tape, prod))
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}
