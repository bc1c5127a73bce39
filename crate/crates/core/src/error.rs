use std::path::PathBuf;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty set: {0}")]
    EmptySet(String),
    #[error("extraction failed: {0}")]
    Extraction(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by the filesystem rather than the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
