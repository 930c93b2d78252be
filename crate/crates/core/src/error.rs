use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure classes of the engine. The CLI maps each class to its own exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    IoContext {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: duplicate passage id {id:?}")]
    DuplicateId { id: String, line: usize },

    #[error("line {line}: missing field {field:?}")]
    MissingField { field: String, line: usize },

    #[error("line {line}: invalid UTF-8 ({detail})")]
    Encoding { line: usize, detail: String },

    #[error("line {line}: malformed record: {detail}")]
    Malformed { line: usize, detail: String },

    #[error("line {line}: {what} is empty")]
    EmptyText { what: &'static str, line: usize },

    #[error("{} quer{} reference unknown target passages: {}", .qids.len(), if .qids.len() == 1 { "y" } else { "ies" }, .qids.join(", "))]
    UnresolvedTargets { qids: Vec<String> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown passage handle {handle} (collection holds {len})")]
    UnknownHandle { handle: u32, len: usize },

    #[error("unknown passage id {0:?}")]
    UnknownPassageId(String),

    #[error("{kind} file, offset {offset}: {detail}")]
    BinaryFormat {
        kind: &'static str,
        offset: u64,
        detail: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("query vector has zero norm")]
    ZeroVector,

    #[error("prompt template {template}: missing value for {placeholder}")]
    MissingPlaceholder {
        template: &'static str,
        placeholder: &'static str,
    },

    #[error("endpoint failed after {attempts} attempt(s){}: {message}", .status.map(|s| format!(" with HTTP {s}")).unwrap_or_default())]
    Endpoint {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },

    #[error("endpoint returned an empty completion")]
    EmptyCompletion,

    #[error("no gold passage for query {0:?}")]
    MissingGold(String),

    #[error("query {0:?} appears twice")]
    DuplicateQuery(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Attaches the file an error was found in.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::InFile { .. }) => e,
            e => Error::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping stage and file tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::InFile { source, .. } => source.root(),
            e => e,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
