use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("offset {offset}: {msg}")]
    Binary { offset: u64, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty collection")]
    EmptyCollection,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("zero vector: {0}")]
    ZeroVector(&'static str),

    #[error("no trainable pairs")]
    NoTrainablePairs,

    #[error("no negatives: a batch needs at least two instances")]
    NoNegatives,

    #[error("no evaluable queries")]
    NoEvaluableQueries,

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
