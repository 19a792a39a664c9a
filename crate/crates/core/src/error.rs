use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid control mode {mode} for a layout with {mode_count} modes")]
    InvalidMode { mode: String, mode_count: usize },

    #[error("trajectory has {actual} intervals, expected {expected}")]
    TrajectoryLength { expected: usize, actual: usize },

    #[error("horizon mismatch: {0}")]
    Horizon(String),

    #[error("adjacency matrix has a negative entry {value} at ({row}, {col})")]
    NegativeProbability { row: usize, col: usize, value: f64 },

    #[error("histogram bins differ: {0}")]
    BinMismatch(String),

    #[error("non-finite policy cost {cost} at iteration {iteration} (step size {gamma})")]
    NonFiniteCost { iteration: usize, gamma: f64, cost: f64 },

    #[error("no sensor regions to project onto")]
    EmptyRegions,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMode { .. } => "invalid_mode",
            Error::TrajectoryLength { .. } => "trajectory_length",
            Error::Horizon(_) => "horizon",
            Error::NegativeProbability { .. } => "negative_probability",
            Error::BinMismatch(_) => "bin_mismatch",
            Error::NonFiniteCost { .. } => "non_finite_cost",
            Error::EmptyRegions => "empty_regions",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Config { .. } => "config",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
