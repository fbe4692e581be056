use thiserror::Error;

use crate::fnn::Activation;
use crate::linalg::LinalgError;
use crate::sampling::SamplingError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("zero normalization in {0}")]
    ZeroNorm(&'static str),
    #[error("activation `{0}` is not supported for {1}")]
    UnsupportedActivation(Activation, &'static str),
    #[error("numeric blowup at iteration {iteration} in block {block}")]
    Blowup { iteration: usize, block: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
