//! Crate-wide error type.
//!
//! Every failure is classified into one of three classes so that binaries can
//! map errors onto stable process exit codes: configuration problems (the
//! request itself is invalid), numerical problems (the request is valid but a
//! solver or a quality gate failed), and data problems (inputs or on-disk
//! artifacts are missing or malformed).

use thiserror::Error;

/// Coarse classification of an [`Error`], stable across variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid configuration or arguments.
    Config,
    /// Solver failure, tolerance violation, or kernel-quality failure.
    Numerical,
    /// Missing or malformed data, files, or cache entries.
    Data,
}

impl ErrorClass {
    /// Process exit code for this class (0 is success, reserved elsewhere).
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Data => 4,
        }
    }

    /// Stable lowercase name, used in machine-readable error output.
    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Numerical => "numerical",
            ErrorClass::Data => "data",
        }
    }
}

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// The requested configuration is invalid (bad bounds, zero cells, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The grid is too coarse to represent a requested feature.
    #[error("insufficient resolution: {0}")]
    Resolution(String),

    /// An iterative or direct solver failed to meet its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A computed kernel violated positivity or mass constraints where the
    /// caller requires them (e.g. a likelihood evaluation).
    #[error("kernel quality failure: {0}")]
    KernelQuality(String),

    /// Chain tuning failed (e.g. acceptance rate collapsed).
    #[error("tuning failure: {0}")]
    Tuning(String),

    /// Input data are malformed or inconsistent with the configuration.
    #[error("invalid data: {0}")]
    Data(String),

    /// A cache entry is required but missing or fails validation.
    #[error("cache failure: {0}")]
    Cache(String),

    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization failure: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Resolution(_) => ErrorClass::Config,
            Error::Numerical(_) | Error::KernelQuality(_) | Error::Tuning(_) => {
                ErrorClass::Numerical
            }
            Error::Data(_) | Error::Cache(_) | Error::Io(_) | Error::Json(_) => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
