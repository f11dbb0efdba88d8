use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layer sizes {0:?}: need at least two positive widths")]
    InvalidLayerSizes(Vec<usize>),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("forward cache does not match the network or input batch")]
    StaleCache,

    #[error("non-finite gradient encountered")]
    NonFiniteGradient,

    #[error("non-finite {term} in loss")]
    NonFiniteLoss { term: &'static str },

    #[error("non-finite output from {0}")]
    NonFiniteOutput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulator failure at theta={theta:?}: {reason}")]
    Simulator { theta: Vec<f64>, reason: String },

    #[error("simulation of row {row} failed: {source}")]
    DatasetRow {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("acceptance rate {rate:.3e} after {trials} trials is too low; increase epsilon")]
    AbcStarved { rate: f64, trials: u64 },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Short stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidLayerSizes(_) => "invalid_layer_sizes",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::StaleCache => "stale_cache",
            Error::NonFiniteGradient => "non_finite_gradient",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::NonFiniteOutput(_) => "non_finite_output",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Simulator { .. } => "simulator",
            Error::DatasetRow { .. } => "dataset_row",
            Error::Diverged { .. } => "diverged",
            Error::AbcStarved { .. } => "abc_starved",
            Error::Checkpoint(_) => "checkpoint",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
