use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solvers, generators and file interfaces.
#[derive(Debug, Error)]
pub enum Error {
    /// A participant or instance parameter is outside its admissible range.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// An operation argument (index, batchsize, tolerance) is out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: JsonError,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// A JSON error carrying the path of the offending field.
pub type JsonError = serde_path_to_error::Error<serde_json::Error>;

/// Deserializes `text`, naming the field that failed.
pub(crate) fn from_json<T: serde::de::DeserializeOwned>(
    text: &str,
) -> std::result::Result<T, JsonError> {
    serde_path_to_error::deserialize(&mut serde_json::Deserializer::from_str(text))
}

pub(crate) fn load_json<T: serde::de::DeserializeOwned>(
    path: &std::path::Path,
    text: &str,
) -> Result<T> {
    from_json(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub type Result<T> = std::result::Result<T, Error>;
