use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{layer}: backward called without a cached forward pass")]
    MissingCache { layer: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },

    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("file truncated while reading {what}")]
    Truncated { what: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("scenario {scenario}: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in optimization rather than in the inputs.
    pub fn is_training_failure(&self) -> bool {
        match self {
            Error::NonFiniteGradient { .. } | Error::Training(_) => true,
            Error::Scenario { source, .. } => source.is_training_failure(),
            _ => false,
        }
    }
}
