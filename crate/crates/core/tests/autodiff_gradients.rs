use heartseg::autodiff::gradcheck::{check_gradients, random_projection, random_tensor};
use heartseg::autodiff::{
    bilstm, conv1d_dilated, conv2d, instance_norm, ops, BiLstmParams, Conv2dSpec, LstmDirection, Tape, Tensor,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn conv1d_gradient() {
    let mut r = rng(1);
    for d in [1, 2, 4] {
        let inputs = vec![
            random_tensor(&[2, 3, 17], 1.0, &mut r),
            random_tensor(&[4, 3, 3], 0.5, &mut r),
            random_tensor(&[4], 0.5, &mut r),
        ];
        let rep = check_gradients(
            &inputs,
            |t, v| {
                let y = conv1d_dilated(t, v[0], v[1], v[2], d)?;
                random_projection(t, y, 9)
            },
            STEP,
            150,
            d as u64,
        )
        .unwrap();
        assert!(rep.max_rel_err < TOL, "dilation {d}: {rep:?}");
    }
}

#[test]
fn conv2d_gradient() {
    let mut r = rng(2);
    let inputs = vec![
        random_tensor(&[2, 2, 5, 8], 1.0, &mut r),
        random_tensor(&[3, 2, 3, 3], 0.5, &mut r),
        random_tensor(&[3], 0.5, &mut r),
    ];
    let spec = Conv2dSpec { stride: (1, 2), padding: (1, 1) };
    let rep = check_gradients(
        &inputs,
        |t, v| {
            let y = conv2d(t, v[0], v[1], v[2], spec)?;
            random_projection(t, y, 3)
        },
        STEP,
        200,
        5,
    )
    .unwrap();
    assert!(rep.max_rel_err < TOL, "{rep:?}");
}

#[test]
fn instance_norm_gradient() {
    let mut r = rng(3);
    let inputs = vec![random_tensor(&[2, 3, 20], 2.0, &mut r)];
    let rep = check_gradients(
        &inputs,
        |t, v| {
            let y = instance_norm(t, v[0], 1e-5)?;
            random_projection(t, y, 4)
        },
        STEP,
        120,
        6,
    )
    .unwrap();
    assert!(rep.max_rel_err < TOL, "{rep:?}");
}

#[test]
fn bilstm_gradient() {
    let mut r = rng(4);
    let (d, h) = (3, 4);
    let inputs = vec![
        random_tensor(&[2, 6, d], 1.0, &mut r),
        random_tensor(&[4 * h, d], 0.5, &mut r),
        random_tensor(&[4 * h, h], 0.5, &mut r),
        random_tensor(&[4 * h], 0.5, &mut r),
        random_tensor(&[4 * h, d], 0.5, &mut r),
        random_tensor(&[4 * h, h], 0.5, &mut r),
        random_tensor(&[4 * h], 0.5, &mut r),
    ];
    let rep = check_gradients(
        &inputs,
        |t, v| {
            let p = BiLstmParams {
                forward: LstmDirection { w_ih: v[1], w_hh: v[2], bias: v[3] },
                backward: LstmDirection { w_ih: v[4], w_hh: v[5], bias: v[6] },
            };
            let y = bilstm(t, v[0], &p)?;
            random_projection(t, y, 5)
        },
        STEP,
        300,
        7,
    )
    .unwrap();
    assert!(rep.max_rel_err < TOL, "{rep:?}");
}

#[test]
fn small_ops_gradient() {
    let mut r = rng(5);
    let inputs = vec![random_tensor(&[3, 4, 5], 1.0, &mut r), random_tensor(&[3, 4, 5], 1.0, &mut r)];
    let rep = check_gradients(
        &inputs,
        |t, v| {
            let s = ops::residual_add(t, v[0], v[1])?;
            let m = ops::mul(t, s, v[1])?;
            let sw = ops::swap_last_two(t, m)?;
            let sm = ops::softmax(t, sw)?;
            let mean = ops::mean_last(t, sm)?;
            random_projection(t, mean, 2)
        },
        STEP,
        120,
        8,
    )
    .unwrap();
    assert!(rep.max_rel_err < TOL, "{rep:?}");
}

#[test]
fn linear_relu_gradient() {
    let mut r = rng(6);
    let inputs = vec![
        random_tensor(&[2, 5, 6], 1.0, &mut r),
        random_tensor(&[4, 6], 1.0, &mut r),
        random_tensor(&[4], 1.0, &mut r),
    ];
    let rep = check_gradients(
        &inputs,
        |t, v| {
            let y = ops::linear(t, v[0], v[1], v[2])?;
            let y = ops::relu(t, y);
            random_projection(t, y, 1)
        },
        STEP,
        120,
        9,
    )
    .unwrap();
    assert!(rep.max_rel_err < TOL, "{rep:?}");
}

#[test]
fn convolutions_are_linear_in_input() {
    let mut r = rng(7);
    let x1 = random_tensor(&[1, 2, 30], 1.0, &mut r);
    let x2 = random_tensor(&[1, 2, 30], 1.0, &mut r);
    let w = random_tensor(&[3, 2, 3], 1.0, &mut r);
    let (a, b) = (1.7, -0.4);
    let mix = Tensor::from_fn(x1.shape(), |i| a * x1.data()[i] + b * x2.data()[i]);
    let run = |x: &Tensor<f64>| {
        let mut t = Tape::<f64>::new();
        let xv = t.constant(x.clone());
        let wv = t.constant(w.clone());
        let bv = t.constant(Tensor::zeros(&[3]));
        let y = conv1d_dilated(&mut t, xv, wv, bv, 4).unwrap();
        t.value(y).clone()
    };
    let (y1, y2, ym) = (run(&x1), run(&x2), run(&mix));
    for i in 0..ym.numel() {
        assert!((ym.data()[i] - (a * y1.data()[i] + b * y2.data()[i])).abs() < 1e-12);
    }
}

#[test]
fn instance_norm_affine_invariance() {
    let mut r = rng(8);
    let x = random_tensor(&[2, 3, 50], 1.0, &mut r);
    let run = |x: Tensor<f64>| {
        let mut t = Tape::<f64>::new();
        let v = t.constant(x);
        let y = instance_norm(&mut t, v, 1e-5).unwrap();
        t.value(y).clone()
    };
    let base = run(x.clone());
    let scaled = run(Tensor::from_fn(x.shape(), |i| 3.5 * x.data()[i] - 2.0));
    for (a, b) in base.data().iter().zip(scaled.data()) {
        assert!((a - b).abs() < 1e-3);
    }
}

#[test]
fn instance_norm_statistics() {
    let mut r = rng(9);
    let x = random_tensor(&[2, 2, 1000], 3.0, &mut r);
    let mut t = Tape::<f64>::new();
    let v = t.constant(x);
    let y = instance_norm(&mut t, v, 1e-5).unwrap();
    for row in t.value(y).data().chunks(1000) {
        let mean = row.iter().sum::<f64>() / 1000.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1000.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-3);
    }
}

#[test]
fn softmax_shift_invariance_and_normalization() {
    let mut r = rng(10);
    let x = random_tensor(&[50, 4], 5.0, &mut r);
    let shifted = Tensor::from_fn(x.shape(), |i| x.data()[i] + 123.0);
    let p = ops::softmax_values(&x).unwrap();
    let q = ops::softmax_values(&shifted).unwrap();
    for (a, b) in p.data().iter().zip(q.data()) {
        assert!((a - b).abs() < 1e-12);
    }
    for row in p.data().chunks(4) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
