//! Rate-distortion training with the mapping-idempotency (MIC),
//! transformation-reversibility (TRC) and latent-consistency (LCC)
//! constraint paths.

mod config;
mod loss;
mod trainer;

use thiserror::Error;

use crate::codec::CodecError;
use crate::pointcloud::CloudError;
use crate::tensor::TensorError;

pub use config::{lambda_id_for, AuxNorm, ConstraintSet, LossWeights, TrainConfig, RATE_POINTS};
pub use loss::{
    crop_losses, discretized_bits, distortion_loss, lcc_path, mic_path, rate_loss, scale_round_normalized, trc_path,
    LossTerms, Rounding,
};
pub use trainer::{log_csv, train, EpochLog, Trainer, LOG_HEADER};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite {term} at epoch {epoch}, step {step}")]
    NonFiniteLoss { term: &'static str, epoch: usize, step: u64 },
    #[error("empty training dataset")]
    EmptyDataset,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

pub type Result<T> = std::result::Result<T, TrainError>;
