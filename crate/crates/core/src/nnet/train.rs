use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{DropoutMasks, Mode, Network, Probabilities, PROB_FLOOR};
use super::{Adam, ClassWeights, NnetError, TrainConfig};
use crate::encode::EncodedBatch;

/// Weighted mean negative log-likelihood of the true class plus
/// `lambda / 2 * sum ||W||^2` over embedding and dense weights.
pub fn loss(
    probs: &Probabilities,
    labels: &[usize],
    class_weights: &[f64],
    net: &Network,
    l2_lambda: f64,
) -> Result<f64, NnetError> {
    if labels.len() != probs.rows {
        return Err(NnetError::Shape("labels do not match probabilities"));
    }
    let mut data = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= probs.n_classes || y >= class_weights.len() {
            return Err(NnetError::LabelOutOfRange { label: y, n_classes: probs.n_classes });
        }
        data -= class_weights[y] * libm::log(probs.row(r)[y].max(PROB_FLOOR));
    }
    let data = if labels.is_empty() { 0.0 } else { data / labels.len() as f64 };
    Ok(data + 0.5 * l2_lambda * net.squared_weight_norm())
}

/// `N / (K * n_c)`; classes absent from `labels` get weight 1.
pub fn inverse_frequency_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = alloc::vec![0usize; n_classes];
    for &y in labels {
        if y < n_classes {
            counts[y] += 1;
        }
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 1.0 } else { n / (n_classes as f64 * c as f64) })
        .collect()
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// One optimizer step on a labeled mini-batch. Returns the batch loss.
/// A non-finite loss or parameter is reported as [`NnetError::NonFiniteLoss`]
/// and leaves the network untouched.
pub fn train_step<R: Rng + ?Sized>(
    net: &mut Network,
    batch: &EncodedBatch,
    cfg: &TrainConfig,
    class_weights: &[f64],
    adam: &mut Adam,
    rng: &mut R,
) -> Result<f64, NnetError> {
    if cfg.dropout_rates.len() != net.architecture().hidden.len() {
        return Err(NnetError::Config("one dropout rate per hidden layer"));
    }
    let masks = DropoutMasks::sample(rng, batch.rows, &net.architecture().hidden, &cfg.dropout_rates);
    let (loss, grads, stats) = net.loss_and_gradients(batch, class_weights, cfg.l2_lambda, Mode::Train(&masks))?;
    if !loss.is_finite() || !grads.tensors.iter().all(|g| g.iter().all(|v| v.is_finite())) {
        return Err(NnetError::NonFiniteLoss);
    }
    adam.step(net.parameters_mut(), &grads.tensors);
    net.update_running_stats(&stats, cfg.bn_momentum);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
    NanAbort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingVerdict {
    Improved,
    Continue,
    Stop,
}

/// Stops once validation accuracy has not improved for `patience` epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, val_accuracy: f64) -> StoppingVerdict {
        match self.best {
            Some((_, best)) if !(val_accuracy > best) => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StoppingVerdict::Stop
                } else {
                    StoppingVerdict::Continue
                }
            }
            _ => {
                self.best = Some((epoch, val_accuracy));
                self.stale = 0;
                StoppingVerdict::Improved
            }
        }
    }

    /// `(epoch, accuracy)` of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept; 0 when none.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    /// Best-epoch weights. `None` after a NaN abort.
    pub network: Option<Network>,
}

impl TrainReport {
    pub fn best_val_accuracy(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch.checked_sub(1)?).map(|e| e.val_accuracy)
    }
}

fn class_weights_for(cfg: &TrainConfig, labels: &[usize], n_classes: usize) -> Result<Vec<f64>, NnetError> {
    match &cfg.class_weights {
        ClassWeights::InverseFrequency => Ok(inverse_frequency_weights(labels, n_classes)),
        ClassWeights::Uniform => Ok(alloc::vec![1.0; n_classes]),
        ClassWeights::Explicit(w) if w.len() == n_classes => Ok(w.clone()),
        ClassWeights::Explicit(_) => Err(NnetError::Config("one class weight per class")),
    }
}

/// Mini-batch training with per-epoch shuffling, early stopping on
/// validation accuracy and restoration of the best weights. Deterministic
/// for a given `cfg.seed`.
pub fn train(
    mut net: Network,
    train_set: &EncodedBatch,
    val_set: &EncodedBatch,
    cfg: &TrainConfig,
) -> Result<TrainReport, NnetError> {
    cfg.validate()?;
    let train_labels = train_set.labels.as_ref().ok_or(NnetError::MissingLabels)?;
    let val_labels = val_set.labels.as_ref().ok_or(NnetError::MissingLabels)?;
    if train_set.rows == 0 {
        return Err(NnetError::EmptyTrainingData);
    }
    if val_set.rows == 0 {
        return Err(NnetError::EmptyValidationData);
    }
    let k = net.n_classes();
    let weights = class_weights_for(cfg, train_labels, k)?;
    let shapes: Vec<usize> = net.parameters().iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(&shapes, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.rows).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_net: Option<Network> = None;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train_set.select(chunk);
            match train_step(&mut net, &batch, cfg, &weights, &mut adam, &mut rng) {
                Ok(l) => loss_sum += l * chunk.len() as f64,
                Err(NnetError::NonFiniteLoss) => {
                    stop_reason = StopReason::NanAbort;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let probs = net.predict_proba(val_set)?;
        let val_loss = loss(&probs, val_labels, &weights, &net, cfg.l2_lambda)?;
        if !val_loss.is_finite() || !net.is_finite() {
            stop_reason = StopReason::NanAbort;
            break;
        }
        let val_accuracy = accuracy(&probs.predictions(), val_labels);
        epochs.push(EpochStats { epoch, train_loss: loss_sum / train_set.rows as f64, val_loss, val_accuracy });
        match stopper.observe(epoch, val_accuracy) {
            StoppingVerdict::Improved => best_net = Some(net.clone()),
            StoppingVerdict::Continue => {}
            StoppingVerdict::Stop => {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }

    if stop_reason == StopReason::NanAbort {
        return Ok(TrainReport { epochs, best_epoch: 0, stop_reason, network: None });
    }
    let best_epoch = stopper.best().map(|(e, _)| e).unwrap_or(0);
    Ok(TrainReport { epochs, best_epoch, stop_reason, network: best_net })
}
