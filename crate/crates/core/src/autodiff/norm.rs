use super::tape::{Tape, Var};
use super::tensor::{dot, Real};
use crate::error::{ensure, Result};

/// Instance normalization without affine parameters.
///
/// Each row along the last axis (one `(n, c)` pair of `x[N, C, T]`) is
/// standardized with its own mean and biased variance:
/// `y = (x - mu) / sqrt(var + eps)`.
pub fn instance_norm<F: Real>(tape: &mut Tape<F>, x: Var, eps: f64) -> Result<Var> {
    ensure!(eps > 0.0, InvalidArgument, "instance_norm epsilon must be positive, got {eps}");
    let xv = tape.value(x);
    ensure!(xv.rank() >= 2, ShapeMismatch, "instance_norm expects rank >= 2, got {:?}", xv.shape());
    let t = xv.last_dim();
    let inv_t = F::one() / F::lit(t as f64);
    let eps = F::lit(eps);

    let mut out = xv.clone();
    let mut inv_std = Vec::with_capacity(xv.numel() / t);
    for row in out.data_mut().chunks_exact_mut(t) {
        let mean = row.iter().copied().sum::<F>() * inv_t;
        let mut var = F::zero();
        for v in row.iter_mut() {
            *v -= mean;
            var += *v * *v;
        }
        let s = F::one() / (var * inv_t + eps).sqrt();
        for v in row.iter_mut() {
            *v *= s;
        }
        inv_std.push(s);
    }
    let normalized = out.clone();
    Ok(tape.record(
        out,
        vec![x],
        Box::new(move |g, _, _| {
            // dx = (g - mean(g) - y * mean(g * y)) / sigma
            let mut dx = g.clone();
            for ((dr, yr), &s) in dx
                .data_mut()
                .chunks_exact_mut(t)
                .zip(normalized.data().chunks_exact(t))
                .zip(&inv_std)
            {
                let mg = dr.iter().copied().sum::<F>() * inv_t;
                let mgy = dot(dr, yr) * inv_t;
                for (d, &y) in dr.iter_mut().zip(yr) {
                    *d = (*d - mg - y * mgy) * s;
                }
            }
            vec![Some(dx)]
        }),
    ))
}
