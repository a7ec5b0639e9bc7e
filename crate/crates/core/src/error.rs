use thiserror::Error;

/// Errors produced by tensor kernels, the model, the trainer and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An operand's dimensions do not fit the operation.
    #[error("{op}: shape mismatch, expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },

    /// A non-shape argument is out of range or otherwise unusable.
    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    /// An evaluation produced NaN or infinity where a finite value is required.
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A file failed structural validation (bad magic, truncation, bad header).
    #[error("malformed {format} file {path}: {detail}")]
    Malformed {
        format: &'static str,
        path: String,
        detail: String,
    },

    /// A checkpoint's parameter table does not match the model configuration.
    #[error("checkpoint manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(op: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn malformed(
        format: &'static str,
        path: impl AsRef<std::path::Path>,
        detail: impl Into<String>,
    ) -> Self {
        Error::Malformed {
            format,
            path: path.as_ref().display().to_string(),
            detail: detail.into(),
        }
    }
}
