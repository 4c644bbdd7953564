//! From-scratch convolutional network: tensors, layers, reverse-mode
//! gradients, optimizers, training and model files.
//!
//! Everything runs in double precision on a single thread with a fixed
//! summation order, so a given seed, config and dataset always reproduce
//! the same parameters bit for bit.

mod io;
pub mod layers;
mod network;
mod optim;
mod tensor;
mod train;

use thiserror::Error;

pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC};
pub use network::{loss_and_grad, Architecture, ForwardTrace, Gradients, LayerSpec, Network};
pub use optim::{Optimizer, OptimizerState};
pub use tensor::Tensor;
pub use train::{
    evaluate, image_to_tensor, predict, train, train_with_progress, EpochStats, Sample, TrainConfig,
    TrainHistory,
};

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {0} out of range for {1} classes")]
    LabelOutOfRange(usize, usize),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("model format version {0} is not supported (expected {1})")]
    VersionMismatch(u32, u32),
    #[error("model checksum mismatch (file truncated or corrupted)")]
    ChecksumMismatch,
    #[error("malformed model file: {0}")]
    Malformed(String),
}
