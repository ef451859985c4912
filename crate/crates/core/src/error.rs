use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not fit together.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid configuration value (even kernel size, unknown key, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid runtime input (label out of range, empty modality list, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Misuse of an API contract, e.g. calling backward on a non-scalar.
    #[error("contract error: {0}")]
    Contract(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("length error: {what}: expected {expected}, got {actual}")]
    Length {
        what: String,
        expected: u64,
        actual: u64,
    },

    /// NaN/Inf encountered or a gradient check exceeded its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Wraps an I/O error with the path it concerns.
    pub(crate) fn io_at(path: &std::path::Path) -> impl FnOnce(io::Error) -> Error + '_ {
        move |e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }
}
