//! Error types shared across the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or order disagreement between operands.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    /// Pixel value outside [0,1] handed to the feature encoding.
    #[error("encoding error: pixel value {value} outside [0,1]; normalize raw inputs first")]
    Encoding { value: f64 },

    /// Malformed IDX payload.
    #[error("IDX parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Dataset download or integrity failure.
    #[error("fetch error for {url}: {message}")]
    Fetch { url: String, message: String },

    /// Checkpoint container violation (magic, version, truncation).
    #[error("checkpoint error: {message}")]
    Checkpoint { message: String },

    /// Checkpoint architecture differs from what the caller expected.
    #[error("checkpoint spec mismatch: expected {expected}, found {found}")]
    SpecMismatch { expected: String, found: String },

    /// Invalid run configuration or config-file syntax.
    #[error("config error: {message}")]
    Config { message: String },

    /// Non-finite values or a tolerance breach in a numeric check.
    #[error("numeric error in {context}: {message}")]
    Numeric { context: String, message: String },

    /// Multi-seed summary requested with fewer than two seeds.
    #[error("summary error: {message}")]
    Summary { message: String },

    /// Cost guard tripped (oracle order too large).
    #[error("guard error: {message}")]
    Guard { message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dimension(context: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub fn numeric(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config {
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Parse { .. }
            | Error::Fetch { .. }
            | Error::Checkpoint { .. }
            | Error::SpecMismatch { .. }
            | Error::Io { .. } => 3,
            Error::Numeric { .. } | Error::Guard { .. } => 4,
            _ => 1,
        }
    }
}
