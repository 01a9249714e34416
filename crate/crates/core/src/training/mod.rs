//! Mini-batch training with Adam, fused sigmoid/BCE, and F1-driven early stopping.

pub mod adam;
pub mod loss;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{bce_loss, bce_with_logits};

use crate::datagen::WindowSet;
use crate::error::{Error, Result};
use crate::format::write_file;
use crate::metrics::f1::{f1_segment, DEFAULT_THRESHOLD};
use crate::nncore::{Param, Rng, Tensor};

/// A model the training loop can drive.
pub trait Trainable: Clone {
    fn num_outputs(&self) -> usize;

    fn params(&self) -> Vec<&Param<f32>>;

    fn params_mut(&mut self) -> Vec<&mut Param<f32>>;

    /// Marks parameters as frozen. Normalization layers whose parameters are
    /// all frozen stop using batch statistics. Unknown names are an error.
    fn set_frozen(&mut self, names: &BTreeSet<String>) -> Result<()>;

    /// Train-mode forward pass returning the logits the loss is applied to.
    fn forward_train(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>>;

    /// Accumulates parameter gradients from the gradient of the loss with
    /// respect to the logits of the last [`forward_train`](Self::forward_train).
    fn backward(&mut self, grad_logits: &Tensor<f32>) -> Result<()>;

    /// Inference-mode probabilities `[B, K]`.
    fn predict(&self, x: &Tensor<f32>) -> Result<Tensor<f32>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopConfig {
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        EarlyStopConfig {
            patience: 100,
            max_epochs: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub early_stop: EarlyStopConfig,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            adam: AdamConfig::default(),
            early_stop: EarlyStopConfig::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Best-so-far tracking for the stopping rule.
#[derive(Clone, Debug)]
pub struct EarlyStopState<M> {
    pub best_f1: Option<f64>,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub best_weights: Option<M>,
}

impl<M: Clone> EarlyStopState<M> {
    pub fn new(config: EarlyStopConfig) -> Self {
        EarlyStopState {
            best_f1: None,
            best_epoch: 0,
            epochs_since_improvement: 0,
            patience: config.patience,
            max_epochs: config.max_epochs,
            best_weights: None,
        }
    }

    /// Records the metric for `epoch` and returns whether training should stop.
    pub fn observe(&mut self, epoch: usize, f1: f64, model: &M) -> bool {
        if self.best_f1.map_or(true, |b| f1 > b) {
            self.best_f1 = Some(f1);
            self.best_epoch = epoch;
            self.epochs_since_improvement = 0;
            self.best_weights = Some(model.clone());
        } else {
            self.epochs_since_improvement += 1;
        }
        self.epochs_since_improvement >= self.patience || epoch >= self.max_epochs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub best_f1: f64,
    pub stopped: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_f1,best_f1,stopped_flag\n");
        for r in &self.records {
            writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{}",
                r.epoch,
                r.train_loss,
                r.val_f1,
                r.best_f1,
                u8::from(r.stopped)
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }

    pub fn epochs_run(&self) -> usize {
        self.records.len()
    }
}

/// Inference-mode probabilities for every window, in order.
pub fn predict_all<M: Trainable>(model: &M, data: &WindowSet, chunk: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(data.len() * model.num_outputs());
    let idx: Vec<usize> = (0..data.len()).collect();
    for c in idx.chunks(chunk.max(1)) {
        let (x, _) = data.batch(c)?;
        out.extend_from_slice(model.predict(&x)?.data());
    }
    Ok(out)
}

/// Micro F1 over all outputs of `model` on `data`.
pub fn validation_f1<M: Trainable>(model: &M, data: &WindowSet, threshold: f64) -> Result<f64> {
    if data.num_classes() != model.num_outputs() {
        return Err(Error::Data(format!(
            "model has {} outputs but data has {} classes",
            model.num_outputs(),
            data.num_classes()
        )));
    }
    let preds = predict_all(model, data, 64)?;
    let all: Vec<usize> = (0..data.num_classes()).collect();
    Ok(f1_segment(&preds, data.labels(), data.num_classes(), threshold, &all)?.micro_f1)
}

/// Trains `model` in place and leaves it holding the best-on-validation weights.
///
/// Parameters named in `freeze` are never updated.
pub fn train<M: Trainable>(
    model: &mut M,
    train_set: &WindowSet,
    val_set: &WindowSet,
    config: &TrainConfig,
    rng: &mut Rng,
    freeze: &BTreeSet<String>,
) -> Result<TrainingLog> {
    if val_set.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    let threshold = config.threshold;
    train_with_validator(model, train_set, config, rng, freeze, |m: &M| {
        validation_f1(m, val_set, threshold)
    })
}

/// [`train`] with a caller-supplied validation metric.
pub fn train_with_validator<M, F>(
    model: &mut M,
    train_set: &WindowSet,
    config: &TrainConfig,
    rng: &mut Rng,
    freeze: &BTreeSet<String>,
    mut validate: F,
) -> Result<TrainingLog>
where
    M: Trainable,
    F: FnMut(&M) -> Result<f64>,
{
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if train_set.num_classes() != model.num_outputs() {
        return Err(Error::Data(format!(
            "model has {} outputs but training data has {} classes",
            model.num_outputs(),
            train_set.num_classes()
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    model.set_frozen(freeze)?;
    let mut log = TrainingLog::default();
    let mut adam = AdamState::new(config.adam);
    let mut stop = EarlyStopState::new(config.early_stop);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.early_stop.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            let (x, y) = train_set.batch(idx)?;
            model.zero_grad();
            let logits = model.forward_train(&x)?;
            let (loss, grad) = bce_with_logits(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            model.backward(&grad)?;
            let mut trainable: Vec<&mut Param<f32>> = model
                .params_mut()
                .into_iter()
                .filter(|p| !freeze.contains(&p.name))
                .collect();
            adam_step(&mut trainable, &mut adam)?;
            loss_sum += loss;
            batches += 1;
        }
        let val_f1 = validate(model)?;
        let stopped = stop.observe(epoch, val_f1, model);
        log.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_f1,
            best_f1: stop.best_f1.unwrap_or(val_f1),
            stopped,
        });
        if stopped {
            break;
        }
    }
    if let Some(best) = stop.best_weights.take() {
        *model = best;
    }
    log.best_epoch = stop.best_epoch;
    model.set_frozen(&BTreeSet::new())?;
    Ok(log)
}
