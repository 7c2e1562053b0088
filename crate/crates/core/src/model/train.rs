//! Mini-batch Adam training with plateau LR decay and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::HrtfSample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{argmax, pack_batch, softmax, CnnModel, N_CLASSES};

/// Samples processed per forward call outside training.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Relative validation-loss decrease below which an epoch counts as no
    /// improvement, for both the LR schedule and early stopping.
    pub min_rel_improvement: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 200,
            plateau_factor: 0.5,
            plateau_patience: 15,
            min_rel_improvement: 1e-4,
            early_stop_patience: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
            ("plateau_factor", self.plateau_factor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("plateau_factor", self.plateau_factor)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.min_rel_improvement >= 0.0 && self.min_rel_improvement < 1.0) {
            return Err(Error::Config("min_rel_improvement must lie in [0, 1)".into()));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("plateau_patience", self.plateau_patience),
            ("early_stop_patience", self.early_stop_patience),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

fn improves(loss: f64, best: f64, min_rel: f64) -> bool {
    if best.is_infinite() {
        return loss.is_finite();
    }
    loss < best - min_rel * best.abs()
}

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// relative improvement, then starts counting again.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_rel: f64,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, min_rel: f64) -> Self {
        Self { factor, patience, min_rel, best: f64::INFINITY, wait: 0 }
    }

    /// Feeds one epoch's validation loss; returns the new rate if it changed.
    pub fn step(&mut self, loss: f64, lr: f64) -> Option<f64> {
        if improves(loss, self.best, self.min_rel) {
            self.best = loss;
            self.wait = 0;
            return None;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            self.wait = 0;
            Some(lr * self.factor)
        } else {
            None
        }
    }
}

/// Tracks the best validation loss and signals when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_rel: f64,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_rel: f64) -> Self {
        Self { patience, min_rel, best: f64::INFINITY, best_epoch: 0, wait: 0 }
    }

    /// Returns `(improved, stop)` for this epoch.
    pub fn step(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if improves(loss, self.best, self.min_rel) {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            (true, false)
        } else {
            self.wait += 1;
            (false, self.wait >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epochs after which the learning rate was reduced.
    pub lr_reductions: Vec<usize>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn last_epoch(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.epoch)
    }
}

/// Flattened model inputs with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    inputs: Vec<T>,
    labels: Vec<usize>,
    bins: usize,
}

impl<T: Scalar> LabeledSet<T> {
    /// `inputs` holds `labels.len()` rows of `2 * bins` values.
    pub fn new(inputs: Vec<T>, labels: Vec<usize>, bins: usize) -> Result<Self> {
        if inputs.len() != labels.len() * 2 * bins {
            return Err(Error::LengthMismatch {
                what: "labeled set",
                left: inputs.len(),
                right: labels.len() * 2 * bins,
            });
        }
        if let Some(&c) = labels.iter().find(|&&c| c >= N_CLASSES) {
            return Err(Error::ClassOutOfRange(c));
        }
        if let Some(index) = inputs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "model input", index });
        }
        Ok(Self { inputs, labels, bins })
    }

    /// The same set in another precision.
    pub fn cast<U: Scalar>(&self) -> LabeledSet<U> {
        LabeledSet {
            inputs: self.inputs.iter().map(|v| U::of(v.f64())).collect(),
            labels: self.labels.clone(),
            bins: self.bins,
        }
    }

    pub fn from_samples(samples: &[HrtfSample<T>]) -> Result<Self> {
        let bins = samples.first().ok_or(Error::Empty("labeled samples"))?.bins();
        let mut inputs = Vec::with_capacity(samples.len() * 2 * bins);
        for s in samples {
            if s.bins() != bins {
                return Err(Error::LengthMismatch { what: "sample bins", left: s.bins(), right: bins });
            }
            inputs.extend(s.to_input());
        }
        Self::new(inputs, samples.iter().map(HrtfSample::label).collect(), bins)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> &[T] {
        &self.inputs[i * 2 * self.bins..][..2 * self.bins]
    }

    fn rows(&self, idx: &[usize]) -> Vec<&[T]> {
        idx.iter().map(|&i| self.input(i)).collect()
    }
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Scalar> Adam<T> {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            beta1: T::of(cfg.beta1),
            beta2: T::of(cfg.beta2),
            eps: T::of(cfg.epsilon),
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Predicted class and confidence for every row of `set`.
pub fn predict_set<T: Scalar>(model: &CnnModel<T>, set: &LabeledSet<T>) -> Result<Vec<(usize, T)>> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len());
    for chunk in idx.chunks(EVAL_CHUNK) {
        for t in model.forward_batch(&set.rows(chunk), set.bins)? {
            out.push(t.prediction());
        }
    }
    Ok(out)
}

/// Mean cross-entropy and accuracy over `set`.
pub fn evaluate<T: Scalar>(model: &CnnModel<T>, set: &LabeledSet<T>) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in idx.chunks(EVAL_CHUNK) {
        for (t, &i) in model.forward_batch(&set.rows(chunk), set.bins)?.iter().zip(chunk) {
            let y = set.labels[i];
            let p = softmax(&t.logits);
            loss -= p[y].f64().max(f64::MIN_POSITIVE).ln();
            if argmax(&p).0 == y {
                correct += 1;
            }
        }
    }
    let n = set.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains a freshly initialized model seeded from `cfg.seed`.
pub fn train<T: Scalar>(
    train_set: &LabeledSet<T>,
    val_set: &LabeledSet<T>,
    cfg: &TrainConfig,
) -> Result<(CnnModel<T>, History)> {
    let mut model = CnnModel::new(cfg.seed);
    let history = train_from(&mut model, train_set, val_set, cfg)?;
    Ok((model, history))
}

/// Continues training `model` in place; on return it holds the weights of
/// the epoch with the best validation loss.
pub fn train_from<T: Scalar>(
    model: &mut CnnModel<T>,
    train_set: &LabeledSet<T>,
    val_set: &LabeledSet<T>,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if train_set.bins != val_set.bins {
        return Err(Error::LengthMismatch { what: "train/val bins", left: train_set.bins, right: val_set.bins });
    }
    let bins = train_set.bins;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Keep shuffling independent of the stream used for initialization.
    rng.set_stream(1);

    let mut adam = Adam::new(model.params().len(), cfg);
    let mut grad = vec![T::zero(); model.params().len()];
    let mut lr = cfg.learning_rate;
    let mut plateau = PlateauScheduler::new(cfg.plateau_factor, cfg.plateau_patience, cfg.min_rel_improvement);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience, cfg.min_rel_improvement);
    let mut best_params = model.params().to_vec();
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let packed = pack_batch(&train_set.rows(batch), bins)?;
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let loss = model.loss_and_grad(&packed, &labels, bins, &mut grad)?.f64();
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, loss });
            }
            total += loss * batch.len() as f64;
            adam.step(model.params_mut(), &grad, T::of(lr));
        }
        let train_loss = total / train_set.len() as f64;
        let (val_loss, val_accuracy) = evaluate(model, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_loss });
        }
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss, val_accuracy, learning_rate: lr });
        log::info!(
            "epoch {epoch:>3}  train {train_loss:.5}  val {val_loss:.5}  acc {val_accuracy:.4}  lr {lr:.2e}"
        );

        let (improved, stop) = stopper.step(epoch, val_loss);
        if improved {
            best_params.copy_from_slice(model.params());
        }
        if let Some(new_lr) = plateau.step(val_loss, lr) {
            log::info!("epoch {epoch}: learning rate {lr:.2e} -> {new_lr:.2e}");
            lr = new_lr;
            history.lr_reductions.push(epoch);
        }
        if stop {
            history.stopped_early = true;
            break;
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    history.best_epoch = stopper.best_epoch();
    model.meta.input_bins = Some(bins);
    model.meta.seed = Some(cfg.seed);
    Ok(history)
}
