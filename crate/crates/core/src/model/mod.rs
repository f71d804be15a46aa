//! The four architectures (plain CNN, two-stream CNN, convolutional
//! autoencoder, 1-D CNN), their datasets and training loops.

mod arch;
mod data;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricsError;
use crate::neural::{NnError, Optimizer};

pub use arch::{
    cae_layers, cnn1d_layers, conv_tower, mini_cnn_layers, Autoencoder, Classifier, ClassifierTape,
    Inputs, TwoStream,
};
pub use data::{
    planted_body_fraction_dataset, split_indices, ClassifierDataset, ClassifierSample, DcpDataset,
    DcpSample, Split, SplitConfig, SplitSizes,
};
pub use train::{
    evaluate_classifier, train, train_dcp, DcpConfig, DcpOutcome, EpochRecord, TrainReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("empty partition: {0}")]
    EmptyPartition(String),
    #[error("variant {0:?} cannot be used here")]
    WrongVariant(Variant),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    MiniCnn,
    TwoStream,
    Cae,
    Cnn1d,
}

/// Architecture hyper-parameters. Fields irrelevant to `variant` are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// `[C, H, W]` of the history chart.
    pub history_shape: [usize; 3],
    /// `[C, H, W]` of the pattern crop.
    pub pattern_shape: [usize; 3],
    /// Conv blocks per image tower; each block is two 3x3 convs and a 2x2 pool.
    pub blocks: usize,
    /// Channels of the first block; doubled per block.
    pub base_width: usize,
    pub hidden_dim: usize,
    pub fusion_dim: usize,
    /// `[C, H, W]` of one sub-chart fed to the autoencoder.
    pub subchart_shape: [usize; 3],
    pub cae_blocks: usize,
    pub cae_base_width: usize,
    pub latent_dim: usize,
    /// Sub-charts per sample seen by the 1-D CNN.
    pub seq_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::MiniCnn,
            history_shape: [3, 64, 64],
            pattern_shape: [3, 32, 32],
            blocks: 3,
            base_width: 8,
            hidden_dim: 32,
            fusion_dim: 32,
            subchart_shape: [3, 32, 16],
            cae_blocks: 2,
            cae_base_width: 8,
            latent_dim: 16,
            seq_len: 28,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    /// Conv blocks of the 1-D CNN: half the image tower's, rounded up.
    pub fn cnn1d_blocks(&self) -> usize {
        self.blocks.div_ceil(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub split: SplitConfig,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            split: SplitConfig::default(),
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn optimizer(&self) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd { lr: self.lr },
            OptimizerKind::Adam => Optimizer::adam(self.lr),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::BadConfig("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(ModelError::BadConfig("lr must be > 0".into()));
        }
        self.split.validate()
    }
}
