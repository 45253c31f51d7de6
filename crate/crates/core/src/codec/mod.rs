//! Learned attribute codec: quantization, entropy coding, container format,
//! the toy network and the compress/decompress pipeline.

pub mod bitstream;
pub mod control;
pub mod entropy;
pub mod model;
pub mod pipeline;
pub mod quant;
pub mod range_coder;

use thiserror::Error;

use crate::pointcloud::{CloudError, PointCloud, Position};
use crate::tensor::TensorError;

pub use bitstream::{bpp, bpp_from_bytes, Bitstream, BitstreamHeader, HEADER_LEN};
pub use control::IdempotentControlCodec;
pub use entropy::GaussianTable;
pub use model::{BoundModel, CodecModel, ParamGroup, Topology};
pub use pipeline::{
    compress, decompress, decompress_with, estimate_rate, forward_deployed, pad_rows, prepare_input, DecodeMode,
    Decoded, DeployedForward, LearnedCodec,
};
pub use quant::{
    likelihood, likelihood_value, normalize, quantize_centered, quantize_centered_value, scale_round,
    scale_round_value, LIKELIHOOD_FLOOR, SIGMA_MAX, SIGMA_MIN,
};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("bitstream truncated")]
    Truncated,
    #[error("corrupt bitstream: {0}")]
    Corrupt(String),
    #[error("symbol {symbol} at index {index} is outside its table")]
    SymbolOutOfRange { index: usize, symbol: i64 },
    #[error("invalid cumulative frequency table")]
    InvalidCdf,
    #[error("unsupported bitstream version {0}")]
    UnsupportedVersion(u8),
    #[error("empty input")]
    EmptyInput,
    #[error("point count mismatch: bitstream holds {expected}, geometry has {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("model error: {0}")]
    Model(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CodecError {
    fn from(e: std::io::Error) -> Self {
        CodecError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CodecError>;

/// An attribute codec: geometry travels losslessly beside the bitstream.
pub trait Codec: Send + Sync {
    fn name(&self) -> &str;
    fn compress(&self, cloud: &PointCloud) -> Result<Vec<u8>>;
    fn decompress(&self, bytes: &[u8], positions: &[Position]) -> Result<PointCloud>;
}
