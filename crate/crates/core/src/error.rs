//! Error types shared across the crate.

use thiserror::Error;

/// Errors from the numeric core and model evaluation.
#[derive(Debug, Error)]
pub enum NumError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("invalid configuration for {op}: {detail}")]
    Config { op: &'static str, detail: String },
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },
    #[error("non-finite value encountered in {op}")]
    NonFinite { op: &'static str },
}

impl NumError {
    pub fn dimension(op: &'static str, detail: impl Into<String>) -> Self {
        NumError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(op: &'static str, detail: impl Into<String>) -> Self {
        NumError::Config {
            op,
            detail: detail.into(),
        }
    }

    pub fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        NumError::Contract {
            op,
            detail: detail.into(),
        }
    }
}

/// Errors from dataset generation, feature files and manifests.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic in feature file {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: String,
        expected: [u8; 8],
        found: [u8; 8],
    },
    #[error("unsupported feature file version {version} in {path}")]
    BadVersion { path: String, version: u32 },
    #[error("truncated feature file {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: String,
        expected: u64,
        actual: u64,
    },
    #[error("feature file {path} does not match manifest dimensions: {detail}")]
    DimensionMismatch { path: String, detail: String },
    #[error("manifest schema error in {path}: {detail}")]
    Schema { path: String, detail: String },
    #[error("manifest validation failed for video {video_id}: {detail}")]
    Validation { video_id: String, detail: String },
    #[error("missing file referenced by manifest: {path}")]
    MissingFile { path: String },
    #[error("infeasible synthesis spec: {detail}")]
    InfeasibleSpec { detail: String },
    #[error("non-finite value in matrix written to {path}")]
    NonFinite { path: String },
}

impl DataError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Errors from the training loop and checkpoint container.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss component {component} on video {video_id}")]
    NonFiniteLoss {
        component: &'static str,
        video_id: String,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint incompatible with manifest: {0}")]
    Incompatible(String),
    #[error("corrupt checkpoint {path}: {detail}")]
    CorruptCheckpoint { path: String, detail: String },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TrainError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.into(),
            source,
        }
    }
}
