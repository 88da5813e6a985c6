use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("tape was recorded against an older parameter version")]
    StaleTape,
    #[error("unknown layout `{0}`")]
    UnknownLayout(String),
    #[error("free cells of layout `{0}` are not a single connected component")]
    Disconnected(String),
    #[error("malformed layout grid: {0}")]
    MalformedGrid(String),
    #[error("invalid dataset style `{0}`")]
    InvalidStyle(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("requested {requested} keypoints from {available} dataset states")]
    TooManyKeypoints { requested: usize, available: usize },
    #[error("negative edge weight {weight} on ({from}, {to})")]
    NegativeWeight { from: usize, to: usize, weight: f64 },
    #[error("no finite path from any keypoint to the goal")]
    NoPath,
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format { what, reason: reason.into() }
    }
}
