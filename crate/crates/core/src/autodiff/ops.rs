//! Elementwise, reduction and shape operations.

use super::tape::{Tape, Var};
use super::tensor::{axpy, dot, Real, Tensor};
use crate::error::{ensure, Result};

fn same_shape<F: Real>(tape: &Tape<F>, a: Var, b: Var, op: &str) -> Result<()> {
    ensure!(
        tape.shape(a) == tape.shape(b),
        ShapeMismatch,
        "{op}: {:?} vs {:?}",
        tape.shape(a),
        tape.shape(b)
    );
    Ok(())
}

/// Residual connection `x + f(x)`; the gradient flows unchanged to both
/// branches.
pub fn add<F: Real>(tape: &mut Tape<F>, a: Var, b: Var) -> Result<Var> {
    same_shape(tape, a, b, "add")?;
    let mut out = tape.value(a).clone();
    out.add_assign(tape.value(b));
    Ok(tape.record(
        out,
        vec![a, b],
        Box::new(|g, _, needs| {
            vec![needs[0].then(|| g.clone()), needs[1].then(|| g.clone())]
        }),
    ))
}

pub fn residual_add<F: Real>(tape: &mut Tape<F>, x: Var, fx: Var) -> Result<Var> {
    add(tape, x, fx)
}

pub fn mul<F: Real>(tape: &mut Tape<F>, a: Var, b: Var) -> Result<Var> {
    same_shape(tape, a, b, "mul")?;
    let va = tape.value(a);
    let vb = tape.value(b);
    let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
    let out = Tensor::new(va.shape().to_vec(), data)?;
    Ok(tape.record(
        out,
        vec![a, b],
        Box::new(|g, vals, needs| {
            let prod = |other: &Tensor<F>| {
                let mut t = g.clone();
                for (v, &o) in t.data_mut().iter_mut().zip(other.data()) {
                    *v *= o;
                }
                t
            };
            vec![needs[0].then(|| prod(vals[1])), needs[1].then(|| prod(vals[0]))]
        }),
    ))
}

/// Sum of all elements, shape `[1]`.
pub fn sum<F: Real>(tape: &mut Tape<F>, x: Var) -> Var {
    let total = tape.value(x).data().iter().copied().sum();
    tape.record(
        Tensor::scalar(total),
        vec![x],
        Box::new(|g, vals, _| vec![Some(Tensor::full(vals[0].shape(), g.data()[0]))]),
    )
}

pub fn relu<F: Real>(tape: &mut Tape<F>, x: Var) -> Var {
    let v = tape.value(x);
    let out = Tensor::from_fn(v.shape(), |i| v.data()[i].max(F::zero()));
    tape.record(
        out,
        vec![x],
        Box::new(|g, vals, _| {
            let mut dx = g.clone();
            for (d, &xv) in dx.data_mut().iter_mut().zip(vals[0].data()) {
                if xv <= F::zero() {
                    *d = F::zero();
                }
            }
            vec![Some(dx)]
        }),
    )
}

pub fn reshape<F: Real>(tape: &mut Tape<F>, x: Var, shape: &[usize]) -> Result<Var> {
    let out = tape.value(x).clone().reshape(shape)?;
    Ok(tape.record(
        out,
        vec![x],
        Box::new(|g, vals, _| vec![Some(g.clone().reshape(vals[0].shape()).expect("same numel"))]),
    ))
}

/// `[A, B, C] -> [A, C, B]`.
pub fn swap_last_two<F: Real>(tape: &mut Tape<F>, x: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    ensure!(shape.len() == 3, ShapeMismatch, "swap_last_two expects rank 3, got {shape:?}");
    let (a, b, c) = (shape[0], shape[1], shape[2]);
    let out = transpose_bc(tape.value(x), a, b, c);
    Ok(tape.record(
        out,
        vec![x],
        Box::new(move |g, _, _| vec![Some(transpose_bc(g, a, c, b))]),
    ))
}

fn transpose_bc<F: Real>(src: &Tensor<F>, a: usize, b: usize, c: usize) -> Tensor<F> {
    let mut out = vec![F::zero(); a * b * c];
    let s = src.data();
    for ia in 0..a {
        let base = ia * b * c;
        for ib in 0..b {
            for ic in 0..c {
                out[base + ic * b + ib] = s[base + ib * c + ic];
            }
        }
    }
    Tensor::new(vec![a, c, b], out).expect("consistent shape")
}

/// Mean over the last axis; `[..., K] -> [...]` (rank-1 input gives `[1]`).
pub fn mean_last<F: Real>(tape: &mut Tape<F>, x: Var) -> Result<Var> {
    let v = tape.value(x);
    let k = v.last_dim();
    let mut shape = v.shape()[..v.rank() - 1].to_vec();
    if shape.is_empty() {
        shape.push(1);
    }
    let inv = F::one() / F::lit(k as f64);
    let data: Vec<F> = v
        .data()
        .chunks_exact(k)
        .map(|row| row.iter().copied().sum::<F>() * inv)
        .collect();
    let out = Tensor::new(shape, data)?;
    Ok(tape.record(
        out,
        vec![x],
        Box::new(move |g, vals, _| {
            let mut dx = Tensor::zeros(vals[0].shape());
            for (row, &gv) in dx.data_mut().chunks_exact_mut(k).zip(g.data()) {
                row.fill(gv * inv);
            }
            vec![Some(dx)]
        }),
    ))
}

/// Dense layer over the last axis: `x[..., D] * w[O, D]^T + b[O]`.
pub fn linear<F: Real>(tape: &mut Tape<F>, x: Var, w: Var, b: Var) -> Result<Var> {
    let (xv, wv, bv) = (tape.value(x), tape.value(w), tape.value(b));
    ensure!(wv.rank() == 2, ShapeMismatch, "linear weight must be rank 2, got {:?}", wv.shape());
    let (o, d) = (wv.shape()[0], wv.shape()[1]);
    ensure!(
        xv.last_dim() == d && bv.shape() == [o],
        ShapeMismatch,
        "linear: x {:?}, w {:?}, b {:?}",
        xv.shape(),
        wv.shape(),
        bv.shape()
    );
    let rows = xv.numel() / d;
    let mut out = vec![F::zero(); rows * o];
    for (xr, yr) in xv.data().chunks_exact(d).zip(out.chunks_exact_mut(o)) {
        for (j, y) in yr.iter_mut().enumerate() {
            *y = bv.data()[j] + dot(&wv.data()[j * d..(j + 1) * d], xr);
        }
    }
    let mut shape = xv.shape().to_vec();
    *shape.last_mut().unwrap() = o;
    let out = Tensor::new(shape, out)?;
    Ok(tape.record(
        out,
        vec![x, w, b],
        Box::new(move |g, vals, needs| {
            let (xv, wv) = (vals[0], vals[1]);
            let gd = g.data();
            let dx = needs[0].then(|| {
                let mut dx = Tensor::zeros(xv.shape());
                for (dxr, gr) in dx.data_mut().chunks_exact_mut(d).zip(gd.chunks_exact(o)) {
                    for (j, &gv) in gr.iter().enumerate() {
                        axpy(gv, &wv.data()[j * d..(j + 1) * d], dxr);
                    }
                }
                dx
            });
            let dw = needs[1].then(|| {
                let mut dw = Tensor::zeros(wv.shape());
                for (xr, gr) in xv.data().chunks_exact(d).zip(gd.chunks_exact(o)) {
                    for (j, &gv) in gr.iter().enumerate() {
                        axpy(gv, xr, &mut dw.data_mut()[j * d..(j + 1) * d]);
                    }
                }
                dw
            });
            let db = needs[2].then(|| {
                let mut db = Tensor::zeros(&[o]);
                for gr in gd.chunks_exact(o) {
                    for (acc, &gv) in db.data_mut().iter_mut().zip(gr) {
                        *acc += gv;
                    }
                }
                db
            });
            vec![dx, dw, db]
        }),
    ))
}

/// Numerically stable softmax over the last axis.
pub fn softmax_values<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    let k = x.last_dim();
    ensure!(k >= 2, InvalidArgument, "softmax needs at least 2 classes, got {k}");
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut total = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

pub fn softmax<F: Real>(tape: &mut Tape<F>, x: Var) -> Result<Var> {
    let out = softmax_values(tape.value(x))?;
    let k = out.last_dim();
    let probs = out.clone();
    Ok(tape.record(
        out,
        vec![x],
        Box::new(move |g, _, _| {
            let mut dx = g.clone();
            for (dr, pr) in dx.data_mut().chunks_exact_mut(k).zip(probs.data().chunks_exact(k)) {
                let inner = dot(dr, pr);
                for (d, &p) in dr.iter_mut().zip(pr) {
                    *d = p * (*d - inner);
                }
            }
            vec![Some(dx)]
        }),
    ))
}
