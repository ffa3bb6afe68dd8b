//! Two-layer LSTM classifier over windows of the similarity series.
//!
//! Architecture: LSTM(`input_units`) -> dropout -> LSTM(`hidden_units`) ->
//! dropout -> dense(1) -> sigmoid, trained with binary cross-entropy,
//! full backpropagation through time and Adam.

mod dataset;
mod lstm;
mod train;

pub use dataset::{build_constructed_dataset, build_constructed_dataset_multi, sequences_from_series, LabeledSequenceDataset, Sample};
pub use lstm::{Arch, ForwardCache, LstmModel, Masks};
pub use train::{predict, train, train_on, Adam, EpochStats, Prediction};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("series use different metrics")]
    MetricMismatch,
    #[error("series use different window sizes")]
    WindowSizeMismatch,
    #[error("series length {len} is shorter than the lookback {lookback}")]
    TooShort { len: usize, lookback: usize },
    #[error("input sequence contains non-finite values")]
    NonFiniteInput,
    #[error("input has {got} values, model expects {expected}")]
    SequenceLength { expected: usize, got: usize },
    #[error("training split contains a single class")]
    SingleClass,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("parameters became non-finite during epoch {epoch}")]
    DivergedNonFinite { epoch: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Hyper-parameters. Defaults follow the reference configuration
/// (42/12/1 units, 20 % dropout, Adam at 0.01, batches of 128, 128 epochs,
/// two thirds of the data for training).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Units of the first recurrent layer.
    pub input_units: usize,
    /// Units of the second recurrent layer.
    pub hidden_units: usize,
    pub output_units: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_fraction: f64,
    /// Similarity values per sample.
    pub lookback: usize,
    /// Values per timestep (1 for a single metric, 2 for cosine + Pearson).
    pub features: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_units: 42,
            hidden_units: 12,
            output_units: 1,
            dropout_rate: 0.20,
            learning_rate: 0.01,
            batch_size: 128,
            epochs: 128,
            train_fraction: 2.0 / 3.0,
            lookback: 10,
            features: 1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.input_units == 0 || self.hidden_units == 0 || self.lookback == 0 || self.features == 0 {
            return bad("unit counts, lookback and features must be positive");
        }
        if self.output_units != 1 {
            return bad("only a single sigmoid output is supported");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must be in [0, 1)");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train fraction must be in (0, 1)");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}
