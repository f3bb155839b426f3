use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite sample at (channel {channel}, sample {sample})")]
    NonFinite { channel: usize, sample: usize },

    #[error("invalid annotation on line {line}: {reason}")]
    Annotation { line: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("batch norm used in inference mode before any statistics exist")]
    MissingStatistics,

    #[error("backward already ran on this graph")]
    BackwardTwice,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("labels contain a single class; AUC is undefined")]
    SingleClass,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
