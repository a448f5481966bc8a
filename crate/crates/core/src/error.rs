use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the phase synchronization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "invalid band [{low_hz}, {high_hz}] Hz: edges must satisfy 0 < low < high < Nyquist ({nyquist_hz} Hz)"
    )]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        nyquist_hz: f64,
    },

    #[error("invalid filter order {0}: must be at least 1")]
    InvalidOrder(usize),

    #[error("series of length {len} is too short: need more than {min} samples")]
    SeriesTooShort { len: usize, min: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("circular mean undefined: resultant length {0:e} is numerically zero")]
    UndefinedMean(f64),

    #[error("angle difference {0} outside the open interval (-2pi, 2pi)")]
    OutOfRange(f64),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("window of {window} samples exceeds series length {len}")]
    WindowTooLong { window: usize, len: usize },

    #[error("too few phase cycles: found {found} wrap events, need at least {needed}")]
    TooFewCycles { found: usize, needed: usize },

    #[error("infeasible clustering: {0}")]
    Infeasible(String),

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad configuration or input data rather than
    /// a failure during computation.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::UndefinedMean(_) | Error::TooFewCycles { .. } | Error::DegenerateSeries(_)
        )
    }
}
