//! Time-frequency attention network (TFAN) for frame-wise heart-state
//! classification.
//!
//! Pipeline for a batch `x[N, 3, 2000]`:
//! dilated residual encoder -> reshape into frames `[N, C, T, tau]` ->
//! strided 2-D convolutions over (frame, intra-frame) -> mean over the
//! intra-frame axis -> BiLSTM over frames -> per-frame dense layer,
//! producing logits `[N, T, 4]`.

mod config;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    bilstm, conv1d_dilated, conv2d, instance_norm, ops, BiLstmParams, Conv2dSpec, LstmDirection, NamedTensors, Real,
    Tape, Tensor, Var,
};
use crate::error::{ensure, Result};

pub use config::{EncoderBlock, TfanConfig, INPUT_CHANNELS, INPUT_LEN, NORM_EPS, NUM_STATES};

/// Trained (or freshly initialized) network weights.
pub type ModelParams = NamedTensors<f32>;

const RECURRENT_INIT: f64 = 0.08;
const FORGET_BIAS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    FanIn(usize),
    Recurrent,
    Zero,
    /// Zero except the forget-gate quarter, which is `FORGET_BIAS`.
    LstmBias(usize),
}

#[derive(Clone, Debug)]
struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

/// Per-frame class logits `[N, T, 4]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameLogits(pub Tensor<f32>);

/// Parameters placed on a tape, in layout order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub vars: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Tfan {
    cfg: TfanConfig,
    layout: Vec<ParamSpec>,
    /// Index of the first decoder parameter in `layout`.
    decoder_start: usize,
}

impl Tfan {
    pub fn new(cfg: TfanConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layout = Vec::new();
        fn push(layout: &mut Vec<ParamSpec>, name: String, shape: Vec<usize>, init: Init) {
            layout.push(ParamSpec { name, shape, init });
        }

        let mut cin = INPUT_CHANNELS;
        for (i, b) in cfg.encoder_blocks.iter().enumerate() {
            let c = b.channels;
            push(&mut layout, format!("enc{i}.conv1.w"), vec![c, cin, b.kernel_size], Init::FanIn(cin * b.kernel_size));
            push(&mut layout, format!("enc{i}.conv1.b"), vec![c], Init::Zero);
            push(&mut layout, format!("enc{i}.conv2.w"), vec![c, c, b.kernel_size], Init::FanIn(c * b.kernel_size));
            push(&mut layout, format!("enc{i}.conv2.b"), vec![c], Init::Zero);
            if cin != c {
                push(&mut layout, format!("enc{i}.proj.w"), vec![c, cin, 1], Init::FanIn(cin));
                push(&mut layout, format!("enc{i}.proj.b"), vec![c], Init::Zero);
            }
            cin = c;
        }
        let decoder_start = layout.len();
        for (j, &c) in cfg.decoder_conv_channels.iter().enumerate() {
            push(&mut layout, format!("dec{j}.w"), vec![c, cin, 3, 3], Init::FanIn(cin * 9));
            push(&mut layout, format!("dec{j}.b"), vec![c], Init::Zero);
            cin = c;
        }
        let h = cfg.lstm_hidden;
        for dir in ["fwd", "bwd"] {
            push(&mut layout, format!("lstm.{dir}.w_ih"), vec![4 * h, cin], Init::Recurrent);
            push(&mut layout, format!("lstm.{dir}.w_hh"), vec![4 * h, h], Init::Recurrent);
            push(&mut layout, format!("lstm.{dir}.b"), vec![4 * h], Init::LstmBias(h));
        }
        push(&mut layout, "head.w".into(), vec![cfg.num_states, 2 * h], Init::FanIn(2 * h));
        push(&mut layout, "head.b".into(), vec![cfg.num_states], Init::Zero);
        Ok(Tfan {
            cfg,
            layout,
            decoder_start,
        })
    }

    pub fn config(&self) -> &TfanConfig {
        &self.cfg
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.layout.iter().map(|p| p.name.as_str())
    }

    pub fn param_count(&self) -> usize {
        self.layout.iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }

    /// Seeded initialization; identical seeds give bit-identical weights.
    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = self
            .layout
            .iter()
            .map(|p| {
                let n: usize = p.shape.iter().product();
                let data: Vec<f32> = match p.init {
                    Init::FanIn(fan_in) => {
                        let bound = (6.0 / fan_in as f64).sqrt();
                        (0..n).map(|_| rng.gen_range(-bound..bound) as f32).collect()
                    }
                    Init::Recurrent => (0..n).map(|_| rng.gen_range(-RECURRENT_INIT..RECURRENT_INIT) as f32).collect(),
                    Init::Zero => vec![0.0; n],
                    Init::LstmBias(h) => (0..n).map(|k| if k / h == 1 { FORGET_BIAS as f32 } else { 0.0 }).collect(),
                };
                (p.name.clone(), Tensor::new(p.shape.clone(), data).expect("layout shape"))
            })
            .collect();
        NamedTensors { entries }
    }

    /// Checks that `params` matches this architecture name-for-name and
    /// shape-for-shape.
    pub fn check_params<F: Real>(&self, params: &NamedTensors<F>) -> Result<()> {
        ensure!(
            params.entries.len() == self.layout.len(),
            ShapeMismatch,
            "expected {} parameter tensors, got {}",
            self.layout.len(),
            params.entries.len()
        );
        for (spec, (name, t)) in self.layout.iter().zip(&params.entries) {
            ensure!(
                &spec.name == name && spec.shape == t.shape(),
                ShapeMismatch,
                "parameter {name} {:?} does not match expected {} {:?}",
                t.shape(),
                spec.name,
                spec.shape
            );
        }
        Ok(())
    }

    pub fn bind<F: Real>(&self, tape: &mut Tape<F>, params: &NamedTensors<F>, requires_grad: bool) -> Result<BoundParams> {
        self.check_params(params)?;
        let vars = params.entries.iter().map(|(_, t)| tape.leaf(t.clone(), requires_grad)).collect();
        Ok(BoundParams { vars })
    }

    /// Dilated residual encoder: `[N, 3, L] -> [N, C, L]`.
    ///
    /// Each block is pre-activation: `IN -> ReLU -> conv -> IN -> ReLU ->
    /// conv`, added to the (projected, if the width changes) input.
    pub fn encode<F: Real>(&self, tape: &mut Tape<F>, x: Var, p: &BoundParams) -> Result<Var> {
        let shape = tape.shape(x);
        ensure!(
            shape.len() == 3 && shape[1] == INPUT_CHANNELS,
            ShapeMismatch,
            "encoder expects [N, {INPUT_CHANNELS}, L], got {shape:?}"
        );
        let mut k = 0;
        let mut next = || {
            k += 1;
            p.vars[k - 1]
        };
        let mut h = x;
        let mut cin = INPUT_CHANNELS;
        for b in &self.cfg.encoder_blocks {
            let (w1, b1, w2, b2) = (next(), next(), next(), next());
            let a = instance_norm(tape, h, NORM_EPS)?;
            let a = ops::relu(tape, a);
            let a = conv1d_dilated(tape, a, w1, b1, b.dilation)?;
            let a = instance_norm(tape, a, NORM_EPS)?;
            let a = ops::relu(tape, a);
            let a = conv1d_dilated(tape, a, w2, b2, b.dilation)?;
            let skip = if cin != b.channels {
                let (wp, bp) = (next(), next());
                conv1d_dilated(tape, h, wp, bp, 1)?
            } else {
                h
            };
            h = ops::residual_add(tape, skip, a)?;
            cin = b.channels;
        }
        Ok(h)
    }

    /// Splits the time axis into non-overlapping frames:
    /// `[N, C, L] -> [N, C, L / tau, tau]`.
    pub fn frame<F: Real>(&self, tape: &mut Tape<F>, h: Var) -> Result<Var> {
        let shape = tape.shape(h).to_vec();
        ensure!(shape.len() == 3, ShapeMismatch, "framing expects [N, C, L], got {shape:?}");
        let tau = self.cfg.frame_len_samples;
        ensure!(
            shape[2] % tau == 0,
            ShapeMismatch,
            "length {} is not a multiple of the frame length {tau}",
            shape[2]
        );
        ops::reshape(tape, h, &[shape[0], shape[1], shape[2] / tau, tau])
    }

    /// Frame decoder: `[N, C, T, tau] -> [N, T, 4]` logits.
    pub fn decode<F: Real>(&self, tape: &mut Tape<F>, framed: Var, p: &BoundParams) -> Result<Var> {
        let mut k = self.decoder_start;
        let spec = Conv2dSpec {
            stride: (1, 2),
            padding: (1, 1),
        };
        let mut h = framed;
        for _ in &self.cfg.decoder_conv_channels {
            h = conv2d(tape, h, p.vars[k], p.vars[k + 1], spec)?;
            h = ops::relu(tape, h);
            k += 2;
        }
        let pooled = ops::mean_last(tape, h)?; // [N, C, T]
        let seq = ops::swap_last_two(tape, pooled)?; // [N, T, C]
        let v = &p.vars[k..k + 6];
        let lstm = BiLstmParams {
            forward: LstmDirection {
                w_ih: v[0],
                w_hh: v[1],
                bias: v[2],
            },
            backward: LstmDirection {
                w_ih: v[3],
                w_hh: v[4],
                bias: v[5],
            },
        };
        let r = bilstm(tape, seq, &lstm)?;
        ops::linear(tape, r, p.vars[k + 6], p.vars[k + 7])
    }

    /// Full network: `x[N, 3, 2000] -> logits[N, T, 4]`.
    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, x: Var, p: &BoundParams) -> Result<Var> {
        let shape = tape.shape(x);
        ensure!(
            shape.len() == 3 && shape[1] == INPUT_CHANNELS && shape[2] == INPUT_LEN,
            ShapeMismatch,
            "network input must be [N, {INPUT_CHANNELS}, {INPUT_LEN}], got {shape:?}"
        );
        let h = self.encode(tape, x, p)?;
        let framed = self.frame(tape, h)?;
        self.decode(tape, framed, p)
    }

    /// Inference without gradient bookkeeping.
    pub fn predict(&self, params: &ModelParams, x: &Tensor<f32>) -> Result<FrameLogits> {
        ensure!(x.is_finite(), NonFinite, "network input contains NaN or infinity");
        let mut tape = Tape::<f32>::new();
        let p = self.bind(&mut tape, params, false)?;
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, xv, &p)?;
        Ok(FrameLogits(tape.value(out).clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_fits_budget() {
        let m = Tfan::new(TfanConfig::default()).unwrap();
        let n = m.param_count();
        assert!(n <= 350_000, "{n} parameters");
        assert!(n > 50_000);
        let p = m.init_params(0);
        m.check_params(&p).unwrap();
        let total: usize = p.entries.iter().map(|(_, t)| t.numel()).sum();
        assert_eq!(total, n);
    }

    #[test]
    fn init_is_deterministic() {
        let m = Tfan::new(TfanConfig::compact()).unwrap();
        assert_eq!(m.init_params(7), m.init_params(7));
        assert_ne!(m.init_params(7), m.init_params(8));
        let b = m.init_params(7);
        let bias = b.get("lstm.fwd.b").unwrap().data();
        let h = m.config().lstm_hidden;
        assert!(bias[h..2 * h].iter().all(|&v| v == 1.0));
        assert!(bias[..h].iter().chain(&bias[2 * h..]).all(|&v| v == 0.0));
    }

    #[test]
    fn forward_shape() {
        let m = Tfan::new(TfanConfig::compact()).unwrap();
        let p = m.init_params(1);
        let x = Tensor::from_fn(&[2, 3, INPUT_LEN], |i| ((i as f32) * 0.01).sin());
        let y = m.predict(&p, &x).unwrap();
        assert_eq!(y.0.shape(), &[2, 100, 4]);
        assert!(y.0.is_finite());
    }

    #[test]
    fn rejects_wrong_input_and_params() {
        let m = Tfan::new(TfanConfig::compact()).unwrap();
        let p = m.init_params(1);
        assert!(m.predict(&p, &Tensor::zeros(&[1, 3, 1999])).is_err());
        assert!(m.predict(&p, &Tensor::zeros(&[1, 2, 2000])).is_err());
        let mut bad = Tensor::zeros(&[1, 3, 2000]);
        bad.data_mut()[5] = f32::NAN;
        assert!(matches!(m.predict(&p, &bad), Err(crate::Error::NonFinite(_))));
        let other = Tfan::new(TfanConfig::default()).unwrap().init_params(1);
        assert!(m.predict(&other, &Tensor::zeros(&[1, 3, 2000])).is_err());
    }
}
