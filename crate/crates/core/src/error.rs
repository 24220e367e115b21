//! Error type shared by all modules of the toolkit.

use thiserror::Error;

/// Errors produced by dataset I/O, model fitting and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying file-system failure. The display text leaves the cause to
    /// the error chain so that chain printers do not repeat it.
    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A CSV file violated the expected schema. `line` is 1-based and counts
    /// the header line.
    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: String,
        line: usize,
        message: String,
    },

    /// An operation that needs data was handed an empty dataset.
    #[error("dataset is empty")]
    EmptyDataset,

    /// An operation needed samples for an action that the dataset lacks.
    #[error("dataset has no samples with action {action}")]
    MissingAction { action: &'static str },

    /// Logged propensities were requested but at least one sample has none.
    #[error("sample {index} has no logged propensity; refit or switch the propensity source")]
    MissingPropensity { index: usize },

    /// Propensity fitting needs at least two distinct actions to identify
    /// the model.
    #[error("propensity fit needs at least two distinct actions, found {found}")]
    SingleActionDataset { found: usize },

    /// A numeric quantity that must stay finite did not.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// An importance weight was requested with a non-positive propensity,
    /// which means the propensity source lacks a floor.
    #[error("propensity {value} is not positive; use a floored propensity source")]
    NonPositivePropensity { value: f64 },

    /// The importance-weighted test loss is undefined when the policy never
    /// agrees with a logged action.
    #[error("test loss undefined: policy matches none of the {n} logged actions")]
    NoMatchedSamples { n: usize },

    /// A configuration value is outside its allowed range.
    #[error("invalid config: {message}")]
    InvalidConfig { message: String },

    /// A model checkpoint did not match the expected layout.
    #[error("bad checkpoint {path}: {message}")]
    BadCheckpoint { path: String, message: String },
}

impl Error {
    /// Convenience constructor for [`Error::Io`].
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Convenience constructor for [`Error::MalformedRow`].
    pub fn row(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::MalformedRow {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Convenience constructor for [`Error::InvalidConfig`].
    pub fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            message: message.into(),
        }
    }
}
