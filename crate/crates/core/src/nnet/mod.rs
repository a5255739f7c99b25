//! Tabular classifier for one resource target.
//!
//! Categorical features go through embedding tables; their vectors are
//! concatenated with the numeric features and fed through a dense stack
//! (256, 128, 64 units by default). Each hidden layer is
//! `dense -> batch norm -> ReLU -> dropout`. Multi-class heads use softmax,
//! two-class heads a single sigmoid unit. Training minimizes class-weighted
//! cross-entropy plus an L2 penalty on embedding and dense weights with Adam,
//! stops early on validation accuracy and aborts on non-finite loss.

use alloc::vec::Vec;

mod adam;
mod network;
mod train;

pub use adam::Adam;
pub use network::{
    Architecture, BatchStats, DropoutMasks, Gradients, HiddenLayer, Mode, Network, Probabilities, BN_EPS,
    DEFAULT_HIDDEN, PROB_FLOOR,
};
pub use train::{
    accuracy, inverse_frequency_weights, loss, train, train_step, EarlyStopping, EpochStats, StopReason,
    StoppingVerdict, TrainReport,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnetError {
    #[error("invalid architecture: {0}")]
    Architecture(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("batch has no labels")]
    MissingLabels,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("no training data")]
    EmptyTrainingData,
    #[error("no validation data")]
    EmptyValidationData,
    #[error("invalid training config: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassWeights {
    /// `N / (K * n_c)` from the training labels.
    InverseFrequency,
    Uniform,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    /// One rate per hidden layer.
    pub dropout_rates: Vec<f64>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub class_weights: ClassWeights,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_lambda: 1e-4,
            dropout_rates: alloc::vec![0.40, 0.30, 0.30],
            batch_size: 256,
            learning_rate: 5e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            patience: 4,
            max_epochs: 200,
            class_weights: ClassWeights::InverseFrequency,
            bn_momentum: 0.99,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnetError> {
        if self.dropout_rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(NnetError::Config("dropout rates must lie in [0, 1)"));
        }
        if self.patience == 0 {
            return Err(NnetError::Config("patience must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(NnetError::Config("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(NnetError::Config("batch size and max epochs must be positive"));
        }
        if !(self.l2_lambda >= 0.0) || !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(NnetError::Config("bad regularization or momentum"));
        }
        Ok(())
    }
}
