use thiserror::Error;

use crate::hsio::HsioError;
use crate::linalg::LinalgError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Io(#[from] HsioError),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("no spectral discriminant: between-spectral scatter is zero")]
    NoSpectralDiscriminant,

    #[error("neighborhood graph is disconnected ({0} components)")]
    DisconnectedGraph(usize),

    #[error("non-finite objective at sweep {sweep} (layer {layer}): {detail}")]
    NonFiniteObjective {
        sweep: usize,
        layer: usize,
        detail: String,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
