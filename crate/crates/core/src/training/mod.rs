//! Loss, optimizer and the fold-level training loop with early stopping.

mod loss;
mod optim;

pub use loss::{frame_accuracy, loss_and_grad, transition_loss, LossConfig};
pub use optim::{nesterov_step, observe_epoch, StopDecision, TrainState};

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::dataset::LabeledRecording;
use crate::error::{ensure, Error, Result};
use crate::model::{ModelParams, Tfan, TfanConfig, INPUT_CHANNELS, INPUT_LEN, NUM_STATES};
use crate::preprocess::make_channels;
use crate::signal_io::{annotation_to_frames, resample, segment_starts, Annotation, Recording, MODEL_RATE_HZ};

/// A recording with its reference annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedRecording {
    pub recording: Recording,
    pub annotation: Annotation,
}

impl From<LabeledRecording> for AnnotatedRecording {
    fn from(l: LabeledRecording) -> Self {
        AnnotatedRecording {
            recording: l.recording,
            annotation: l.annotation,
        }
    }
}

impl From<&LabeledRecording> for AnnotatedRecording {
    fn from(l: &LabeledRecording) -> Self {
        AnnotatedRecording {
            recording: l.recording.clone(),
            annotation: l.annotation.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: TfanConfig,
    pub loss: LossConfig,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Epochs without a strictly better validation accuracy before stopping.
    pub patience: usize,
    /// Hard cap on epochs; `None` relies on early stopping alone.
    pub max_epochs: Option<usize>,
    /// Overlap of the 2 s training and validation windows.
    pub window_overlap: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: TfanConfig::default(),
            loss: LossConfig::default(),
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 8,
            patience: 20,
            max_epochs: None,
            window_overlap: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings sized for a single CPU core: compact network, non-overlapping
    /// training windows and at most 30 epochs.
    pub fn desk_scale(seed: u64) -> Self {
        TrainConfig {
            model: TfanConfig::compact(),
            max_epochs: Some(30),
            window_overlap: 0.0,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            InvalidArgument,
            "learning rate must be positive"
        );
        ensure!((0.0..1.0).contains(&self.momentum), InvalidArgument, "momentum must be in [0, 1)");
        ensure!(self.batch_size >= 1, InvalidArgument, "batch size must be at least 1");
        ensure!(self.patience >= 1, InvalidArgument, "patience must be at least 1");
        ensure!(self.max_epochs != Some(0), InvalidArgument, "max_epochs must be at least 1");
        ensure!(
            (0.0..1.0).contains(&self.window_overlap),
            InvalidArgument,
            "window overlap must be in [0, 1)"
        );
        Ok(())
    }
}

/// One 2 s network input with its per-frame labels.
#[derive(Clone, Debug)]
pub struct Window {
    /// Channel-major `[3, 2000]`.
    pub x: Vec<f32>,
    pub labels: Vec<usize>,
}

/// Cuts an annotated recording into labelled windows on the same frame grid
/// the segmenter uses.
pub fn prepare_windows(item: &AnnotatedRecording, frame_len: usize, overlap: f64) -> Result<Vec<Window>> {
    let rec = if item.recording.sample_rate_hz == MODEL_RATE_HZ {
        item.recording.clone()
    } else {
        resample(&item.recording, MODEL_RATE_HZ)?
    };
    let channels = make_channels(&rec)?;
    let m = rec.len() / frame_len;
    let frame_ms = frame_len as f64 * 1000.0 / MODEL_RATE_HZ as f64;
    let seq = annotation_to_frames(&item.annotation, rec.duration_s(), frame_ms)?;
    ensure!(
        seq.len() >= m,
        Format,
        "annotation of {} yields {} frames, expected {m}",
        rec.id,
        seq.len()
    );
    let per_window = INPUT_LEN / frame_len;
    segment_starts(m * frame_len, overlap)?
        .into_iter()
        .map(|s| {
            ensure!(s % frame_len == 0, InvalidArgument, "window start {s} is not on the frame grid");
            let f0 = s / frame_len;
            Ok(Window {
                x: channels.window_f32(s, INPUT_LEN),
                labels: seq.labels[f0..f0 + per_window].iter().map(|h| h.index()).collect(),
            })
        })
        .collect()
}

fn prepare_all(items: &[AnnotatedRecording], cfg: &TrainConfig) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for it in items {
        out.extend(prepare_windows(it, cfg.model.frame_len_samples, cfg.window_overlap)?);
    }
    Ok(out)
}

fn batch_tensors(windows: &[&Window], frames: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let n = windows.len();
    let mut x = Vec::with_capacity(n * INPUT_CHANNELS * INPUT_LEN);
    let mut y = vec![0.0f32; n * frames * NUM_STATES];
    for (b, w) in windows.iter().enumerate() {
        x.extend_from_slice(&w.x);
        for (t, &l) in w.labels.iter().enumerate() {
            y[(b * frames + t) * NUM_STATES + l] = 1.0;
        }
    }
    Ok((
        Tensor::new(vec![n, INPUT_CHANNELS, INPUT_LEN], x)?,
        Tensor::new(vec![n, frames, NUM_STATES], y)?,
    ))
}

/// Frame accuracy of `params` over prepared windows.
pub fn window_accuracy(model: &Tfan, params: &ModelParams, windows: &[Window], batch: usize) -> Result<f64> {
    ensure!(!windows.is_empty(), EmptyInput, "no validation windows");
    let frames = model.config().frames_per_window();
    let mut hits = 0.0;
    let mut total = 0usize;
    for chunk in windows.chunks(batch.max(1)) {
        let refs: Vec<&Window> = chunk.iter().collect();
        let (x, _) = batch_tensors(&refs, frames)?;
        let logits = model.predict(params, &x)?;
        let labels: Vec<usize> = chunk.iter().flat_map(|w| w.labels.iter().copied()).collect();
        hits += frame_accuracy(&logits.0, &labels)? * labels.len() as f64;
        total += labels.len();
    }
    Ok(hits / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_accuracy\n");
    for h in history {
        let _ = writeln!(s, "{},{:.9},{:.9}", h.epoch, h.train_loss, h.val_accuracy);
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Snapshot at the best validation accuracy.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub history: Vec<EpochRecord>,
    /// False when `max_epochs` ended the run before early stopping did.
    pub early_stopped: bool,
}

fn check_disjoint(train: &[AnnotatedRecording], val: &[AnnotatedRecording]) -> Result<()> {
    let ids: BTreeSet<&str> = train.iter().map(|r| r.recording.id.as_str()).collect();
    if let Some(dup) = val.iter().find(|r| ids.contains(r.recording.id.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "recording {} is in both the training and the validation set",
            dup.recording.id
        )));
    }
    Ok(())
}

/// Trains one model from `cfg.seed`. With `out_dir`, writes `history.csv`
/// after every epoch and `best.weights` on every improvement.
pub fn train_fold(train: &[AnnotatedRecording], val: &[AnnotatedRecording], cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure!(!train.is_empty(), EmptyInput, "empty training set");
    ensure!(!val.is_empty(), EmptyInput, "empty validation set");
    check_disjoint(train, val)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let model = Tfan::new(cfg.model.clone())?;
    let frames = cfg.model.frames_per_window();
    let train_w = prepare_all(train, cfg)?;
    let val_w = prepare_all(val, cfg)?;
    info!("{} training windows, {} validation windows", train_w.len(), val_w.len());

    let mut state = TrainState::new(model.init_params(cfg.seed), cfg.seed);
    let mut best = state.params.clone();
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_w.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_5EED_5EED_5EED);
    let early_stopped = loop {
        if cfg.max_epochs.is_some_and(|m| state.epoch >= m) {
            break false;
        }
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let refs: Vec<&Window> = idx.iter().map(|&i| &train_w[i]).collect();
            let (x, y) = batch_tensors(&refs, frames)?;
            let look = state.lookahead(cfg.momentum);
            let mut tape = Tape::<f32>::new();
            let bound = model.bind(&mut tape, &look, true)?;
            let xv = tape.constant(x);
            let logits = model.forward(&mut tape, xv, &bound)?;
            let loss = transition_loss(&mut tape, logits, &y, &cfg.loss)?;
            let lv = tape.value(loss).data()[0] as f64;
            ensure!(lv.is_finite(), NonFinite, "training loss is {lv} at epoch {}", state.epoch + 1);
            tape.backward(loss)?;
            let grads: Vec<Tensor<f32>> = bound
                .vars
                .iter()
                .map(|&v| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.shape(v))))
                .collect();
            nesterov_step(&mut state, &grads, cfg.learning_rate, cfg.momentum)?;
            loss_sum += lv * idx.len() as f64;
        }
        let train_loss = loss_sum / train_w.len() as f64;
        let val_accuracy = window_accuracy(&model, &state.params, &val_w, cfg.batch_size)?;
        let decision = observe_epoch(&mut state, val_accuracy, cfg.patience);
        history.push(EpochRecord {
            epoch: state.epoch,
            train_loss,
            val_accuracy,
        });
        info!("epoch {:3}  loss {train_loss:.5}  val acc {val_accuracy:.4}", state.epoch);
        if decision.improved {
            best = state.params.clone();
            best_epoch = state.epoch;
            if let Some(dir) = out_dir {
                best.save(&dir.join("best.weights"))?;
            }
        }
        if let Some(dir) = out_dir {
            let p = dir.join("history.csv");
            std::fs::write(&p, history_csv(&history)).map_err(|e| Error::io(&p, e))?;
        }
        if decision.stop {
            break true;
        }
    };
    Ok(TrainOutcome {
        params: best,
        best_epoch,
        best_accuracy: state.best_accuracy,
        history,
        early_stopped,
    })
}

/// Validation fold of each recording: ids sorted, then dealt round-robin,
/// so earlier folds take the remainder when `k` does not divide the count.
pub fn fold_assignment(ids: &[&str], k: usize) -> Result<Vec<usize>> {
    ensure!(k >= 2, InvalidArgument, "need at least 2 folds, got {k}");
    ensure!(ids.len() >= k, InvalidArgument, "{} recordings cannot fill {k} folds", ids.len());
    let unique: BTreeSet<&str> = ids.iter().copied().collect();
    ensure!(unique.len() == ids.len(), InvalidArgument, "recording ids must be unique");
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(ids[b]));
    let mut fold = vec![0; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        fold[i] = rank % k;
    }
    Ok(fold)
}

#[derive(Clone, Debug)]
pub struct CrossValidation {
    pub best_fold: usize,
    pub params: ModelParams,
    pub folds: Vec<TrainOutcome>,
}

/// k-fold cross-validation; the fold model with the highest validation
/// accuracy wins, the lowest fold index on ties. Fold `j` writes into
/// `out_dir/fold_j`.
pub fn cross_validate(items: &[AnnotatedRecording], k: usize, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<CrossValidation> {
    let ids: Vec<&str> = items.iter().map(|r| r.recording.id.as_str()).collect();
    let fold = fold_assignment(&ids, k)?;
    let mut folds = Vec::with_capacity(k);
    for j in 0..k {
        let (val, train): (Vec<_>, Vec<_>) = items.iter().zip(&fold).partition(|(_, &f)| f == j);
        let val: Vec<AnnotatedRecording> = val.into_iter().map(|(r, _)| r.clone()).collect();
        let train: Vec<AnnotatedRecording> = train.into_iter().map(|(r, _)| r.clone()).collect();
        info!("fold {j}: {} train / {} validation", train.len(), val.len());
        let dir: Option<PathBuf> = out_dir.map(|d| d.join(format!("fold_{j}")));
        folds.push(train_fold(&train, &val, cfg, dir.as_deref())?);
    }
    let mut best_fold = 0;
    for (j, f) in folds.iter().enumerate() {
        if f.best_accuracy > folds[best_fold].best_accuracy {
            best_fold = j;
        }
    }
    Ok(CrossValidation {
        best_fold,
        params: folds[best_fold].params.clone(),
        folds,
    })
}
