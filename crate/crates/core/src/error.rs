use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    /// Documents with no in-vocabulary words cannot drive the
    /// length-scaled hidden biases.
    #[error("degenerate document(s): {}", .doc_ids.join(", "))]
    DegenerateDocument { doc_ids: Vec<String> },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("zero variance")]
    ZeroVariance,

    #[error("unlabeled code for document {0:?}")]
    Unlabeled(String),

    #[error("k = {k} exceeds the {available} available neighbors")]
    KTooLarge { k: usize, available: usize },

    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn degenerate(doc_id: impl Into<String>) -> Self {
        Error::DegenerateDocument {
            doc_ids: vec![doc_id.into()],
        }
    }
}
