use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}:{line}: entity key `{key}` has no metadata row")]
    MissingEntityMetadata {
        path: PathBuf,
        line: usize,
        key: String,
    },

    #[error("unknown entity id {0}")]
    UnknownEntity(u32),

    #[error("unknown entity key `{0}`")]
    UnknownEntityKey(String),

    #[error("split infeasible: {0}")]
    SplitInfeasible(String),

    #[error("query {query} ({side}) has an empty negative pool")]
    EmptyPool { query: usize, side: &'static str },

    #[error("entity type `{0}` has no alternative entity to corrupt with")]
    NoCandidates(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("misaligned score sets: {0}")]
    MisalignedScoreSets(String),

    #[error("router kind `{0}` does not support this operation")]
    UnsupportedRouterKind(String),

    #[error("cosine similarity of a zero vector")]
    ZeroVector,

    #[error("unseen entity `{0}` has no trained entity of the same type")]
    NoSameTypeNeighbor(String),

    #[error("no text vector for entity `{0}`")]
    MissingVector(String),

    #[error("hash mismatch for {artifact}: expected {expected}, found {found}")]
    HashMismatch {
        artifact: String,
        expected: String,
        found: String,
    },

    #[error("stage `{stage}` failed: {source}")]
    StageFailure {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::MalformedLine {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }
}
