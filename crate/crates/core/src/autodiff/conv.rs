//! One- and two-dimensional convolutions (cross-correlation, as in every
//! deep learning framework).

use super::tape::{Tape, Var};
use super::tensor::{axpy, dot, Real, Tensor};
use crate::error::{ensure, Result};

/// Dilated 1-D convolution with bidirectional zero padding of
/// `dilation * (ks - 1) / 2` samples on each side, so the time length of
/// the output equals that of the input.
///
/// Shapes: `x[N, C_in, T]`, `w[C_out, C_in, ks]`, `b[C_out]` ->
/// `[N, C_out, T]`. `ks` must be odd.
pub fn conv1d_dilated<F: Real>(
    tape: &mut Tape<F>,
    x: Var,
    w: Var,
    b: Var,
    dilation: usize,
) -> Result<Var> {
    let (xv, wv, bv) = (tape.value(x), tape.value(w), tape.value(b));
    ensure!(
        xv.rank() == 3 && wv.rank() == 3,
        ShapeMismatch,
        "conv1d expects x[N,C,T] and w[Co,Ci,K], got {:?} and {:?}",
        xv.shape(),
        wv.shape()
    );
    let (n, ci, t) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
    let (co, wci, ks) = (wv.shape()[0], wv.shape()[1], wv.shape()[2]);
    ensure!(wci == ci, ShapeMismatch, "conv1d: input has {ci} channels, kernel expects {wci}");
    ensure!(bv.shape() == [co], ShapeMismatch, "conv1d: bias {:?} for {co} outputs", bv.shape());
    ensure!(ks % 2 == 1, InvalidArgument, "conv1d kernel size must be odd, got {ks}");
    ensure!(dilation >= 1, InvalidArgument, "dilation must be positive");

    let geom = Conv1dGeom { n, ci, co, t, ks, dilation };
    let mut out = vec![F::zero(); n * co * t];
    for ni in 0..n {
        for o in 0..co {
            let row = &mut out[(ni * co + o) * t..(ni * co + o + 1) * t];
            row.fill(bv.data()[o]);
            for c in 0..ci {
                let xr = &xv.data()[(ni * ci + c) * t..(ni * ci + c + 1) * t];
                for k in 0..ks {
                    let wk = wv.data()[(o * ci + c) * ks + k];
                    let (lo, hi, off) = geom.span(k);
                    if lo < hi {
                        axpy(wk, &xr[(lo as isize + off) as usize..(hi as isize + off) as usize], &mut row[lo..hi]);
                    }
                }
            }
        }
    }
    let out = Tensor::new(vec![n, co, t], out)?;
    Ok(tape.record(
        out,
        vec![x, w, b],
        Box::new(move |g, vals, needs| geom.backward(g, vals[0], vals[1], needs)),
    ))
}

#[derive(Clone, Copy)]
struct Conv1dGeom {
    n: usize,
    ci: usize,
    co: usize,
    t: usize,
    ks: usize,
    dilation: usize,
}

impl Conv1dGeom {
    /// Output range `[lo, hi)` for tap `k` and the input offset relative to
    /// the output index.
    #[inline]
    fn span(&self, k: usize) -> (usize, usize, isize) {
        let pad = (self.dilation * (self.ks - 1) / 2) as isize;
        let off = (k * self.dilation) as isize - pad;
        let t = self.t as isize;
        let lo = (-off).max(0).min(t);
        let hi = (t - off).min(t).max(lo);
        (lo as usize, hi as usize, off)
    }

    fn backward<F: Real>(
        &self,
        g: &Tensor<F>,
        x: &Tensor<F>,
        w: &Tensor<F>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<F>>> {
        let Conv1dGeom { n, ci, co, t, ks, .. } = *self;
        let gd = g.data();
        let mut dx = needs[0].then(|| Tensor::zeros(x.shape()));
        let mut dw = needs[1].then(|| Tensor::zeros(w.shape()));
        for ni in 0..n {
            for o in 0..co {
                let gr = &gd[(ni * co + o) * t..(ni * co + o + 1) * t];
                for c in 0..ci {
                    let xbase = (ni * ci + c) * t;
                    for k in 0..ks {
                        let (lo, hi, off) = self.span(k);
                        if lo >= hi {
                            continue;
                        }
                        let xlo = (lo as isize + off) as usize;
                        let xhi = (hi as isize + off) as usize;
                        let widx = (o * ci + c) * ks + k;
                        if let Some(dx) = dx.as_mut() {
                            axpy(w.data()[widx], &gr[lo..hi], &mut dx.data_mut()[xbase + xlo..xbase + xhi]);
                        }
                        if let Some(dw) = dw.as_mut() {
                            dw.data_mut()[widx] += dot(&gr[lo..hi], &x.data()[xbase + xlo..xbase + xhi]);
                        }
                    }
                }
            }
        }
        let db = needs[2].then(|| {
            Tensor::from_fn(&[co], |o| {
                (0..n)
                    .map(|ni| gd[(ni * co + o) * t..(ni * co + o + 1) * t].iter().copied().sum::<F>())
                    .sum()
            })
        });
        vec![dx, dw, db]
    }
}

/// Hyper-parameters of [`conv2d`]: per-axis stride and zero padding for the
/// (frame, intra-frame) axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec {
            stride: (1, 1),
            padding: (0, 0),
        }
    }
}

#[derive(Clone, Copy)]
struct Conv2dGeom {
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    spec: Conv2dSpec,
}

impl Conv2dGeom {
    fn patch_len(&self) -> usize {
        self.ci * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one sample `x[C, H, W]` into `[C*KH*KW, OH*OW]`.
    fn im2col<F: Real>(&self, x: &[F], col: &mut [F]) {
        let (sh, sw) = self.spec.stride;
        let (ph, pw) = self.spec.padding;
        let cols = self.cols();
        for c in 0..self.ci {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let r = (c * self.kh + i) * self.kw + j;
                    let dst = &mut col[r * cols..(r + 1) * cols];
                    for yo in 0..self.oh {
                        let yi = (yo * sh + i) as isize - ph as isize;
                        let drow = &mut dst[yo * self.ow..(yo + 1) * self.ow];
                        if yi < 0 || yi >= self.h as isize {
                            drow.fill(F::zero());
                            continue;
                        }
                        let src = &x[(c * self.h + yi as usize) * self.w..][..self.w];
                        for (xo, d) in drow.iter_mut().enumerate() {
                            let xi = (xo * sw + j) as isize - pw as isize;
                            *d = if xi < 0 || xi >= self.w as isize { F::zero() } else { src[xi as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatter-adds columns back onto `dx`.
    fn col2im<F: Real>(&self, col: &[F], dx: &mut [F]) {
        let (sh, sw) = self.spec.stride;
        let (ph, pw) = self.spec.padding;
        let cols = self.cols();
        for c in 0..self.ci {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let r = (c * self.kh + i) * self.kw + j;
                    let src = &col[r * cols..(r + 1) * cols];
                    for yo in 0..self.oh {
                        let yi = (yo * sh + i) as isize - ph as isize;
                        if yi < 0 || yi >= self.h as isize {
                            continue;
                        }
                        let drow = &mut dx[(c * self.h + yi as usize) * self.w..][..self.w];
                        for xo in 0..self.ow {
                            let xi = (xo * sw + j) as isize - pw as isize;
                            if xi >= 0 && xi < self.w as isize {
                                drow[xi as usize] += src[yo * self.ow + xo];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution over `x[N, C_in, H, W]` with `w[C_out, C_in, KH, KW]`
/// and `b[C_out]`, giving `[N, C_out, OH, OW]` where
/// `OH = (H + 2*ph - KH) / sh + 1` (likewise for `OW`).
pub fn conv2d<F: Real>(tape: &mut Tape<F>, x: Var, w: Var, b: Var, spec: Conv2dSpec) -> Result<Var> {
    let (xv, wv, bv) = (tape.value(x), tape.value(w), tape.value(b));
    ensure!(
        xv.rank() == 4 && wv.rank() == 4,
        ShapeMismatch,
        "conv2d expects x[N,C,H,W] and w[Co,Ci,KH,KW], got {:?} and {:?}",
        xv.shape(),
        wv.shape()
    );
    let (n, ci, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
    let (co, wci, kh, kw) = (wv.shape()[0], wv.shape()[1], wv.shape()[2], wv.shape()[3]);
    ensure!(wci == ci, ShapeMismatch, "conv2d: input has {ci} channels, kernel expects {wci}");
    ensure!(bv.shape() == [co], ShapeMismatch, "conv2d: bias {:?} for {co} outputs", bv.shape());
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    ensure!(sh >= 1 && sw >= 1, InvalidArgument, "conv2d strides must be positive");
    ensure!(
        h + 2 * ph >= kh && wd + 2 * pw >= kw,
        ShapeMismatch,
        "conv2d kernel {kh}x{kw} does not fit padded input {h}x{wd}"
    );
    let geom = Conv2dGeom {
        ci,
        h,
        w: wd,
        kh,
        kw,
        oh: (h + 2 * ph - kh) / sh + 1,
        ow: (wd + 2 * pw - kw) / sw + 1,
        spec,
    };
    let (plen, cols) = (geom.patch_len(), geom.cols());
    let mut col = vec![F::zero(); plen * cols];
    let mut out = vec![F::zero(); n * co * cols];
    for ni in 0..n {
        geom.im2col(&xv.data()[ni * ci * h * wd..(ni + 1) * ci * h * wd], &mut col);
        for o in 0..co {
            let orow = &mut out[(ni * co + o) * cols..(ni * co + o + 1) * cols];
            orow.fill(bv.data()[o]);
            for (r, &wv) in wv.data()[o * plen..(o + 1) * plen].iter().enumerate() {
                axpy(wv, &col[r * cols..(r + 1) * cols], orow);
            }
        }
    }
    let out = Tensor::new(vec![n, co, geom.oh, geom.ow], out)?;
    Ok(tape.record(
        out,
        vec![x, w, b],
        Box::new(move |g, vals, needs| {
            let (xv, wv) = (vals[0], vals[1]);
            let gd = g.data();
            let mut dx = needs[0].then(|| Tensor::zeros(xv.shape()));
            let mut dw = needs[1].then(|| Tensor::zeros(wv.shape()));
            let mut col = vec![F::zero(); plen * cols];
            let mut dcol = vec![F::zero(); plen * cols];
            let sample = ci * h * wd;
            for ni in 0..n {
                if let Some(dw) = dw.as_mut() {
                    geom.im2col(&xv.data()[ni * sample..(ni + 1) * sample], &mut col);
                    for o in 0..co {
                        let grow = &gd[(ni * co + o) * cols..(ni * co + o + 1) * cols];
                        let dwrow = &mut dw.data_mut()[o * plen..(o + 1) * plen];
                        for (r, acc) in dwrow.iter_mut().enumerate() {
                            *acc += dot(grow, &col[r * cols..(r + 1) * cols]);
                        }
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    dcol.fill(F::zero());
                    for o in 0..co {
                        let grow = &gd[(ni * co + o) * cols..(ni * co + o + 1) * cols];
                        for (r, &wv) in wv.data()[o * plen..(o + 1) * plen].iter().enumerate() {
                            axpy(wv, grow, &mut dcol[r * cols..(r + 1) * cols]);
                        }
                    }
                    geom.col2im(&dcol, &mut dx.data_mut()[ni * sample..(ni + 1) * sample]);
                }
            }
            let db = needs[2].then(|| {
                Tensor::from_fn(&[co], |o| {
                    (0..n)
                        .map(|ni| gd[(ni * co + o) * cols..(ni * co + o + 1) * cols].iter().copied().sum::<F>())
                        .sum()
                })
            });
            vec![dx, dw, db]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |i| (i as f64 * 0.37).sin())
    }

    #[test]
    fn identity_kernel_any_dilation() {
        for d in [1, 2, 4, 8] {
            let mut tape = Tape::<f64>::new();
            let x = tape.constant(ramp(&[2, 3, 10]));
            let mut w = Tensor::zeros(&[3, 3, 3]);
            for c in 0..3 {
                w.data_mut()[(c * 3 + c) * 3 + 1] = 1.0;
            }
            let w = tape.constant(w);
            let b = tape.constant(Tensor::zeros(&[3]));
            let y = conv1d_dilated(&mut tape, x, w, b, d).unwrap();
            assert_eq!(tape.value(y), tape.value(x));
        }
    }

    #[test]
    fn dilated_padding_preserves_length() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(ramp(&[1, 1, 10]));
        let w = tape.constant(Tensor::full(&[1, 1, 3], 1.0));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = conv1d_dilated(&mut tape, x, w, b, 2).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 10]);
        // out[0] sees x[-2] (pad), x[0], x[2]
        let xv = tape.value(x).data();
        assert!((tape.value(y).data()[0] - (xv[0] + xv[2])).abs() < 1e-15);
        assert!((tape.value(y).data()[5] - (xv[3] + xv[5] + xv[7])).abs() < 1e-15);
    }

    #[test]
    fn conv1d_rejects_bad_shapes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(ramp(&[1, 2, 10]));
        let w = tape.constant(Tensor::zeros(&[1, 3, 3]));
        let b = tape.constant(Tensor::zeros(&[1]));
        assert!(conv1d_dilated(&mut tape, x, w, b, 1).is_err());
        let w = tape.constant(Tensor::zeros(&[1, 2, 2]));
        assert!(conv1d_dilated(&mut tape, x, w, b, 1).is_err());
    }

    #[test]
    fn conv2d_unit_kernel_is_identity() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(ramp(&[2, 1, 5, 6]));
        let w = tape.constant(Tensor::full(&[1, 1, 1, 1], 1.0));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = conv2d(&mut tape, x, w, b, Conv2dSpec::default()).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn conv2d_zero_kernel_gives_bias() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(ramp(&[1, 2, 5, 20]));
        let w = tape.constant(Tensor::zeros(&[3, 2, 3, 3]));
        let b = tape.constant(Tensor::new(vec![3], vec![0.5, -1.0, 0.0]).unwrap());
        let spec = Conv2dSpec { stride: (1, 2), padding: (1, 1) };
        let y = conv2d(&mut tape, x, w, b, spec).unwrap();
        assert_eq!(tape.shape(y), &[1, 3, 5, 10]);
        assert!(tape.value(y).data()[..50].iter().all(|&v| v == 0.5));
        assert!(tape.value(y).data()[50..100].iter().all(|&v| v == -1.0));
        assert!(tape.value(y).data()[100..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_matches_direct_sum() {
        let mut tape = Tape::<f64>::new();
        let xt = ramp(&[1, 2, 4, 7]);
        let wt = Tensor::from_fn(&[2, 2, 3, 3], |i| ((i * 7 % 11) as f64 - 5.0) / 5.0);
        let x = tape.constant(xt.clone());
        let w = tape.constant(wt.clone());
        let b = tape.constant(Tensor::zeros(&[2]));
        let spec = Conv2dSpec { stride: (1, 2), padding: (1, 1) };
        let y = conv2d(&mut tape, x, w, b, spec).unwrap();
        let (oh, ow) = (4, 4);
        assert_eq!(tape.shape(y), &[1, 2, oh, ow]);
        for o in 0..2 {
            for yo in 0..oh {
                for xo in 0..ow {
                    let mut s = 0.0;
                    for c in 0..2 {
                        for i in 0..3 {
                            for j in 0..3 {
                                let yi = yo as isize + i as isize - 1;
                                let xi = (2 * xo) as isize + j as isize - 1;
                                if yi >= 0 && yi < 4 && xi >= 0 && xi < 7 {
                                    s += wt.data()[((o * 2 + c) * 3 + i) * 3 + j]
                                        * xt.data()[(c * 4 + yi as usize) * 7 + xi as usize];
                                }
                            }
                        }
                    }
                    let got = tape.value(y).data()[(o * oh + yo) * ow + xo];
                    assert!((got - s).abs() < 1e-12, "{got} vs {s}");
                }
            }
        }
    }
}
