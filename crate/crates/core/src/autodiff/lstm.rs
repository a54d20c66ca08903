//! Bidirectional LSTM as a single fused tape operation with hand-written
//! backpropagation through time.

use super::tape::{Tape, Var};
use super::tensor::{axpy, dot, Real, Tensor};
use crate::error::{ensure, Result};

/// Weights of one direction. Gate order along the `4H` axis is input,
/// forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmDirection {
    /// `[4H, D]`
    pub w_ih: Var,
    /// `[4H, H]`
    pub w_hh: Var,
    /// `[4H]`
    pub bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstmParams {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

#[inline]
fn sigmoid<F: Real>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

/// Per-step activations kept for the backward pass of one sequence in one
/// direction. All buffers are `[T, H]` (gates) in processing order.
struct Trace<F> {
    i: Vec<F>,
    f: Vec<F>,
    g: Vec<F>,
    o: Vec<F>,
    c: Vec<F>,
    tanh_c: Vec<F>,
    h: Vec<F>,
}

#[derive(Clone, Copy)]
struct Dims {
    n: usize,
    t: usize,
    d: usize,
    h: usize,
}

/// Runs one direction over one sequence, writing hidden states into
/// `out[.., out_offset..out_offset + H]`.
fn run_direction<F: Real>(
    x: &[F],
    w_ih: &[F],
    w_hh: &[F],
    bias: &[F],
    dims: Dims,
    reverse: bool,
    out: &mut [F],
    out_offset: usize,
) -> Trace<F> {
    let Dims { t, d, h, .. } = dims;
    let mut tr = Trace {
        i: vec![F::zero(); t * h],
        f: vec![F::zero(); t * h],
        g: vec![F::zero(); t * h],
        o: vec![F::zero(); t * h],
        c: vec![F::zero(); t * h],
        tanh_c: vec![F::zero(); t * h],
        h: vec![F::zero(); t * h],
    };
    let mut z = vec![F::zero(); 4 * h];
    let zero = vec![F::zero(); h];
    let mut c_prev = vec![F::zero(); h];
    for step in 0..t {
        let ti = if reverse { t - 1 - step } else { step };
        let xt = &x[ti * d..(ti + 1) * d];
        let h_prev: &[F] = if step == 0 { &zero } else { &tr.h[(step - 1) * h..step * h] };
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = bias[r] + dot(&w_ih[r * d..(r + 1) * d], xt) + dot(&w_hh[r * h..(r + 1) * h], h_prev);
        }
        if step > 0 {
            c_prev.copy_from_slice(&tr.c[(step - 1) * h..step * h]);
        }
        let s = step * h;
        for k in 0..h {
            let ig = sigmoid(z[k]);
            let fg = sigmoid(z[h + k]);
            let gg = z[2 * h + k].tanh();
            let og = sigmoid(z[3 * h + k]);
            let c = fg * c_prev[k] + ig * gg;
            let tc = c.tanh();
            tr.i[s + k] = ig;
            tr.f[s + k] = fg;
            tr.g[s + k] = gg;
            tr.o[s + k] = og;
            tr.c[s + k] = c;
            tr.tanh_c[s + k] = tc;
            tr.h[s + k] = og * tc;
        }
        let orow = &mut out[ti * 2 * h + out_offset..ti * 2 * h + out_offset + h];
        orow.copy_from_slice(&tr.h[s..s + h]);
    }
    tr
}

/// Backpropagation through time for one direction of one sequence.
#[allow(clippy::too_many_arguments)]
fn bptt<F: Real>(
    tr: &Trace<F>,
    x: &[F],
    w_ih: &[F],
    w_hh: &[F],
    dims: Dims,
    reverse: bool,
    g_out: &[F],
    out_offset: usize,
    dx: Option<&mut [F]>,
    dw_ih: Option<&mut [F]>,
    dw_hh: Option<&mut [F]>,
    dbias: Option<&mut [F]>,
) {
    let Dims { t, d, h, .. } = dims;
    let mut dx = dx;
    let mut dw_ih = dw_ih;
    let mut dw_hh = dw_hh;
    let mut dbias = dbias;
    let mut dh_next = vec![F::zero(); h];
    let mut dc_next = vec![F::zero(); h];
    let mut dz = vec![F::zero(); 4 * h];
    let zero = vec![F::zero(); h];
    for step in (0..t).rev() {
        let ti = if reverse { t - 1 - step } else { step };
        let s = step * h;
        let gout = &g_out[ti * 2 * h + out_offset..ti * 2 * h + out_offset + h];
        let c_prev: &[F] = if step == 0 { &zero } else { &tr.c[s - h..s] };
        for k in 0..h {
            let dh = gout[k] + dh_next[k];
            let (ig, fg, gg, og, tc) = (tr.i[s + k], tr.f[s + k], tr.g[s + k], tr.o[s + k], tr.tanh_c[s + k]);
            let dc = dh * og * (F::one() - tc * tc) + dc_next[k];
            let d_o = dh * tc;
            let d_i = dc * gg;
            let d_g = dc * ig;
            let d_f = dc * c_prev[k];
            dc_next[k] = dc * fg;
            dz[k] = d_i * ig * (F::one() - ig);
            dz[h + k] = d_f * fg * (F::one() - fg);
            dz[2 * h + k] = d_g * (F::one() - gg * gg);
            dz[3 * h + k] = d_o * og * (F::one() - og);
        }
        let xt = &x[ti * d..(ti + 1) * d];
        let h_prev: &[F] = if step == 0 { &zero } else { &tr.h[s - h..s] };
        if let Some(dw) = dw_ih.as_deref_mut() {
            for (r, &dzr) in dz.iter().enumerate() {
                axpy(dzr, xt, &mut dw[r * d..(r + 1) * d]);
            }
        }
        if let Some(dw) = dw_hh.as_deref_mut() {
            if step > 0 {
                for (r, &dzr) in dz.iter().enumerate() {
                    axpy(dzr, h_prev, &mut dw[r * h..(r + 1) * h]);
                }
            }
        }
        if let Some(db) = dbias.as_deref_mut() {
            for (acc, &dzr) in db.iter_mut().zip(&dz) {
                *acc += dzr;
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxt = &mut dx[ti * d..(ti + 1) * d];
            for (r, &dzr) in dz.iter().enumerate() {
                axpy(dzr, &w_ih[r * d..(r + 1) * d], dxt);
            }
        }
        dh_next.fill(F::zero());
        for (r, &dzr) in dz.iter().enumerate() {
            axpy(dzr, &w_hh[r * h..(r + 1) * h], &mut dh_next);
        }
    }
}

/// Bidirectional LSTM over `x[N, T, D]` giving `[N, T, 2H]`: forward
/// hidden states in `[.., :H]`, backward ones in `[.., H:]`. Initial hidden
/// and cell states are zero.
pub fn bilstm<F: Real>(tape: &mut Tape<F>, x: Var, p: &BiLstmParams) -> Result<Var> {
    let xv = tape.value(x);
    ensure!(xv.rank() == 3, ShapeMismatch, "bilstm expects x[N,T,D], got {:?}", xv.shape());
    let (n, t, d) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
    let w_shape = tape.shape(p.forward.w_hh).to_vec();
    ensure!(
        w_shape.len() == 2 && w_shape[0] == 4 * w_shape[1],
        ShapeMismatch,
        "bilstm recurrent weight must be [4H, H], got {w_shape:?}"
    );
    let h = w_shape[1];
    for dir in [&p.forward, &p.backward] {
        ensure!(
            tape.shape(dir.w_ih) == [4 * h, d]
                && tape.shape(dir.w_hh) == [4 * h, h]
                && tape.shape(dir.bias) == [4 * h],
            ShapeMismatch,
            "bilstm weights {:?}/{:?}/{:?} incompatible with D={d}, H={h}",
            tape.shape(dir.w_ih),
            tape.shape(dir.w_hh),
            tape.shape(dir.bias)
        );
    }
    let dims = Dims { n, t, d, h };
    let params = [
        p.forward.w_ih,
        p.forward.w_hh,
        p.forward.bias,
        p.backward.w_ih,
        p.backward.w_hh,
        p.backward.bias,
    ];
    let mut out = vec![F::zero(); n * t * 2 * h];
    let mut traces = Vec::with_capacity(2 * n);
    {
        let xd = xv.data();
        let w: Vec<&[F]> = params.iter().map(|&v| tape.value(v).data()).collect();
        for ni in 0..n {
            let xs = &xd[ni * t * d..(ni + 1) * t * d];
            let os = &mut out[ni * t * 2 * h..(ni + 1) * t * 2 * h];
            traces.push(run_direction(xs, w[0], w[1], w[2], dims, false, os, 0));
            traces.push(run_direction(xs, w[3], w[4], w[5], dims, true, os, h));
        }
    }
    let out = Tensor::new(vec![n, t, 2 * h], out)?;
    let mut parents = vec![x];
    parents.extend_from_slice(&params);
    Ok(tape.record(
        out,
        parents,
        Box::new(move |g, vals, needs| {
            let Dims { n, t, d, h } = dims;
            let mut grads: Vec<Option<Tensor<F>>> =
                vals.iter().zip(needs).map(|(v, &nd)| nd.then(|| Tensor::zeros(v.shape()))).collect();
            let (gx, gw) = grads.split_at_mut(1);
            let (gf, gb) = gw.split_at_mut(3);
            for ni in 0..n {
                let xs = &vals[0].data()[ni * t * d..(ni + 1) * t * d];
                let gs = &g.data()[ni * t * 2 * h..(ni + 1) * t * 2 * h];
                for (dir, (dg, base)) in [(&mut *gf, 1usize), (&mut *gb, 4usize)].into_iter().enumerate() {
                    let [dwi, dwh, dbb] = dg else { unreachable!() };
                    bptt(
                        &traces[2 * ni + dir],
                        xs,
                        vals[base].data(),
                        vals[base + 1].data(),
                        dims,
                        dir == 1,
                        gs,
                        dir * h,
                        gx[0].as_mut().map(|v| &mut v.data_mut()[ni * t * d..(ni + 1) * t * d]),
                        dwi.as_mut().map(|v| v.data_mut()),
                        dwh.as_mut().map(|v| v.data_mut()),
                        dbb.as_mut().map(|v| v.data_mut()),
                    );
                }
            }
            grads
        }),
    ))
}
