//! A small convolutional network trained from scratch on chemical images.
//!
//! Inception-ResNet style stages over NCHW tensors, RMSprop, masked losses
//! and early stopping on validation loss. Layers are generic over f32 and
//! f64 so gradients can be checked in double precision.

use thiserror::Error;

pub mod blocks;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_model, save_model, CheckpointError};
pub use network::{Arch, Head, Network, NetworkConfig};
pub use tensor::{Scalar, Tensor};
pub use train::{train, write_history_csv, EpochRecord, Model, Standardizer, TrainConfig, TrainError, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("backward called before forward")]
    NoForward,
}
