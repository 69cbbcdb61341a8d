//! Error types shared across the toolkit.

use std::path::PathBuf;

/// Toolkit-wide error type.
///
/// The variant determines the CLI exit code: validation, configuration,
/// format, and input errors exit with 2; everything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Data fails a schema or consistency check (duplicate ids, label
    /// mismatches, out-of-range values).
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration value or combination is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A file does not match its expected on-disk format.
    #[error("format error: {0}")]
    Format(String),

    /// An argument violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),

    /// Training cannot proceed (e.g. single-class training set).
    #[error("training error: {0}")]
    Training(String),

    /// Evaluation cannot proceed (e.g. no trials, single-class cell).
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// I/O failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Config(_) | Error::Format(_) | Error::Input(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
