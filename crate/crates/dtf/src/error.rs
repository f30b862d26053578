//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers (e.g. the CLI) to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad configuration or arguments.
    Usage,
    /// Missing, malformed, or inconsistent data.
    Data,
    /// Numerical failure (non-finite values) during computation.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: shape mismatch, expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: direction mismatch, expected {expected}, got {got}")]
    DirectionMismatch {
        context: &'static str,
        expected: crate::flow::FlowDirection,
        got: crate::flow::FlowDirection,
    },

    #[error("component {0} is not a primitive outlier component")]
    UnsupportedComponent(crate::metrics::SfComponent),

    #[error("{context}: no valid pixels")]
    NoValidPixels { context: &'static str },

    #[error("fusion weights not normalized: max |w_fw + w_bw - 1| = {max_deviation:.3e}")]
    WeightsNotNormalized { max_deviation: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("checkpoint {path:?}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("checkpoint {path:?}: architecture tag {found:?} does not match {expected:?}")]
    ArchitectureTag {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{what} missing for sample {sample}: {path:?}")]
    MissingFile {
        what: String,
        sample: String,
        path: PathBuf,
    },

    #[error("codec error for {path:?}: {reason}")]
    Codec { path: PathBuf, reason: String },

    #[error("manifest {path:?}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("io error on {path:?}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path:?}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Usage,
            Error::NonFinite { .. } => ErrorCategory::Numeric,
            _ => ErrorCategory::Data,
        }
    }
}
