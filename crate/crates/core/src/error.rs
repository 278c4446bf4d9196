use thiserror::Error;

use crate::npsw::NpswError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty tensor passed to {0}")]
    EmptyTensor(&'static str),

    #[error("region {region} lies outside a {height}x{width} grid")]
    RegionOutOfBounds {
        region: String,
        height: usize,
        width: usize,
    },

    #[error("hole region leaves no candidate patches outside it")]
    NoCandidates,

    #[error("hole mask is empty")]
    EmptyMask,

    #[error("hole mask covers the whole image")]
    FullMask,

    #[error("assignment for query {query} targets candidate {candidate}, which overlaps the hole")]
    InvalidAssignment { query: usize, candidate: usize },

    #[error("missing weight tensor `{0}`")]
    MissingWeights(String),

    #[error("weight tensor `{name}` has dims {actual:?}, expected {expected:?}")]
    WeightDims {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("forward cache is stale or belongs to a different network")]
    StaleCache,

    #[error("input too small: {height}x{width}, need at least {min}x{min}")]
    InputTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("objective returned a non-finite value")]
    NonFinite,

    #[error(transparent)]
    Weights(#[from] NpswError),

    #[error("image format error: {0}")]
    Image(String),

    #[error("unsupported image bit depth: {0}")]
    UnsupportedDepth(u8),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Self {
        Error::ShapeMismatch {
            op,
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }
}
