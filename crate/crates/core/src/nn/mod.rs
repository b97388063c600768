//! A small permutation-invariant point classifier: shared per-point layers
//! with batch norm, global max-pool, and a two-layer head, with exact
//! gradients for both parameters and input coordinates.

pub mod adapt;
pub mod attack;
pub mod checkpoint;
pub mod loss;
pub mod network;
pub mod train;

use thiserror::Error;

pub use adapt::{bn_adapt, mean_entropy, tent_adapt, TentConfig};
pub use attack::{input_loss_gradient, pgd_attack, PgdConfig, PgdOutcome};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use loss::{batch_entropy, batch_smoothed_ce, loss_smoothed_ce, smooth_target, softmax};
pub use network::{argmax, Architecture, BnStats, ForwardCache, ForwardPass, Gradients, Mode, NetworkState, Params};
pub use train::{evaluate, train, Adam, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("cloud {index} of the batch is empty")]
    EmptyCloud { index: usize },
    #[error("batch statistics need at least two samples, got {0}")]
    BatchTooSmall(usize),
    #[error("cache does not belong to the current network state")]
    StaleCache,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("label smoothing must lie in [0, 1), got {0}")]
    Smoothing(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset of {samples} samples is smaller than the batch size {batch_size}")]
    DatasetTooSmall { samples: usize, batch_size: usize },
    #[error("training data must contain at least two classes")]
    SingleClass,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
}
