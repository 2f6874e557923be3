//! Mini-batch Adam training with early stopping on validation loss.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::backward::backward;
use super::loss::{batch_loss, class_weights, ClassWeightMode};
use crate::error::{Error, Result};
use crate::model::{forward, Architecture, Mode, ModelParams, DEFAULT_FORGET_BIAS};
use crate::pipeline::{PaddedBatch, DEFAULT_MAX_LEN};

/// Network shape; input width and class count come from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub max_len: usize,
    pub hidden: Vec<usize>,
    pub heads: usize,
    pub attention: bool,
    pub mask_padding: bool,
    pub forget_bias: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            max_len: DEFAULT_MAX_LEN,
            hidden: vec![256, 256],
            heads: 8,
            attention: true,
            mask_padding: false,
            forget_bias: DEFAULT_FORGET_BIAS,
        }
    }
}

impl ModelConfig {
    pub fn architecture(&self, input_dim: usize, classes: usize, dropout: f64) -> Architecture {
        let mut arch = Architecture::new(input_dim, classes).with_dropout(dropout);
        arch.max_len = self.max_len;
        arch.hidden = self.hidden.clone();
        arch.heads = self.heads;
        arch.attention = self.attention;
        arch.mask_padding = self.mask_padding;
        arch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without strict validation-loss improvement before stopping.
    pub patience: usize,
    pub dropout: f64,
    pub seed: u64,
    pub class_weights: ClassWeightMode,
    /// Share of the training data held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 20,
            patience: 20,
            dropout: 0.3,
            seed: 0,
            class_weights: ClassWeightMode::Balanced,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidInput(
                "batch size and epochs must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidInput(format!(
                "validation fraction {} not in [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean weighted loss over the epoch's mini-batches, dropout active.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    /// A loss turned NaN or infinite; the best earlier parameters are kept.
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were returned; 0 means the initialization.
    pub best_epoch: usize,
    pub stop: StopReason,
}

impl TrainHistory {
    /// Tab-separated `epoch train_loss train_acc val_loss val_acc`; missing
    /// validation values are written as `NA`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n");
        let na = |v: Option<f64>| v.map_or_else(|| "NA".to_owned(), |x| format!("{x:.6}"));
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{}\t{}",
                e.epoch,
                e.train_loss,
                e.train_acc,
                na(e.val_loss),
                na(e.val_acc)
            );
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub history: TrainHistory,
    pub class_weights: Vec<f64>,
}

fn labels_of(batch: &PaddedBatch) -> Result<Vec<u32>> {
    batch.require_labels()
}

/// Holds out `validation_fraction` of `data` (a seeded shuffle) and trains on
/// the rest.
pub fn train(
    data: &PaddedBatch,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let n = data.len();
    let n_val = (cfg.validation_fraction * n as f64).round() as usize;
    if n_val == 0 || n_val >= n {
        return train_with_validation(data, None, model_cfg, cfg);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0001));
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let mut val_idx = val_idx.to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    train_with_validation(
        &data.select(&train_idx),
        Some(&data.select(&val_idx)),
        model_cfg,
        cfg,
    )
}

fn accuracy_of(probs: &[Vec<f64>], labels: &[u32]) -> f64 {
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(p, &y)| crate::eval::decide(p, 0.5) == y)
        .count();
    correct as f64 / labels.len().max(1) as f64
}

/// Trains on `train_set`; early stopping monitors the loss on `validation`,
/// or the training loss when no validation set is given.
pub fn train_with_validation(
    train_set: &PaddedBatch,
    validation: Option<&PaddedBatch>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let labels = labels_of(train_set)?;
    let val_labels = validation.map(labels_of).transpose()?;
    let classes = labels
        .iter()
        .chain(val_labels.iter().flatten())
        .max()
        .map_or(2, |&m| (m as usize + 1).max(2));
    let weights = class_weights(&labels, classes, &cfg.class_weights)?;
    let arch = model_cfg.architecture(train_set.feature_dim, classes, cfg.dropout);
    let mut model = ModelParams::init_with_forget_bias(&arch, cfg.seed, model_cfg.forget_bias)?;
    let mut adam = AdamState::new(&model);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0002);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0003);
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut epochs = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train_set.select(chunk);
            let batch_labels: Vec<u32> = chunk.iter().map(|&i| labels[i]).collect();
            let out = forward(&batch, &model, Mode::Train, dropout_rng.random())?;
            loss_sum += batch_loss(&out.probs, &batch_labels, &weights)? * chunk.len() as f64;
            correct += accuracy_of(&out.probs, &batch_labels) * chunk.len() as f64;
            let grads = backward(&batch, &model, &weights, &out)?;
            adam.step(&mut model, &grads, cfg.learning_rate);
        }
        let n = train_set.len() as f64;
        let (train_loss, train_acc) = (loss_sum / n, correct / n);
        let (val_loss, val_acc) = match (validation, &val_labels) {
            (Some(v), Some(vl)) if !v.is_empty() => {
                let out = forward(v, &model, Mode::Eval, 0)?;
                (
                    Some(batch_loss(&out.probs, vl, &weights)?),
                    Some(accuracy_of(&out.probs, vl)),
                )
            }
            _ => (None, None),
        };
        epochs.push(EpochStats {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        let monitored = val_loss.unwrap_or(train_loss);
        if !monitored.is_finite() || !model.is_finite() {
            stop = StopReason::Diverged;
            break;
        }
        if monitored < best.0 {
            best = (monitored, epoch, model.clone());
        } else if epoch - best.1 >= cfg.patience {
            stop = StopReason::EarlyStopped;
            break;
        }
    }

    let (_, best_epoch, best_model) = best;
    Ok(TrainOutcome {
        model: best_model,
        history: TrainHistory {
            epochs,
            best_epoch,
            stop,
        },
        class_weights: weights,
    })
}
