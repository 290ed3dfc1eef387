//! Error types shared across the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required metadata field `{0}`")]
    MissingField(String),

    #[error("invalid language tag `{0}`")]
    InvalidLanguage(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("duplicate dataset_document_number `{0}`")]
    DuplicateDocumentNumber(String),

    #[error("document body is empty")]
    EmptyBody,

    #[error("unknown enricher `{0}`")]
    UnknownEnricher(String),

    #[error("enricher `{0}` modified protected identity fields")]
    EnricherContract(String),

    #[error("unknown metadata field `{0}`")]
    UnknownField(String),

    #[error("vector dimension mismatch: index dim {expected}, query dim {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("ann graph not built")]
    GraphNotBuilt,

    #[error("query is empty")]
    EmptyQuery,

    #[error("value out of range: {0}")]
    RangeError(String),

    #[error("no relevance judgments for query `{0}`")]
    MissingQrels(String),

    #[error("cutoff list is empty")]
    EmptyCutoffs,

    #[error("dense index is empty")]
    EmptyIndex,

    #[error("snapshot format version {got} not supported (expected {expected})")]
    VersionMismatch { expected: u32, got: u32 },

    #[error("checksum mismatch for `{0}`")]
    ChecksumMismatch(String),

    #[error("corrupt index file `{file}`: {message}")]
    CorruptIndex { file: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input data rather than engine internals.
    /// The CLI maps these to a distinct exit code.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::CorruptIndex { .. })
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::ParseError {
            line,
            message: message.into(),
        }
    }
}
