use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient rank: requested {requested} component(s) but effective rank is {rank}")]
    InsufficientRank { requested: usize, rank: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("empty sentence")]
    EmptySentence,

    #[error("sequence too long: {len} tokens exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenIdOutOfRange { id: usize, vocab_size: usize },

    #[error("unknown format version {0}")]
    UnknownFormatVersion(u32),

    #[error("blob length mismatch: manifest expects {expected} bytes, blob has {got}")]
    BlobLengthMismatch { expected: usize, got: usize },

    #[error("tensor {name}: {detail}")]
    TensorShape { name: String, detail: String },

    #[error("missing tensor {0}")]
    MissingTensor(String),

    #[error("pair length mismatch: \"{male}\" ({male_len} tokens) vs \"{female}\" ({female_len} tokens)")]
    PairLengthMismatch {
        male: String,
        female: String,
        male_len: usize,
        female_len: usize,
    },

    #[error("{location} constrained to one dimension, requested {requested}")]
    OneDimensional { location: String, requested: usize },

    #[error("{location} allows at most two dimensions, requested {requested}")]
    TwoDimensional { location: String, requested: usize },

    #[error("missing subspace for location {0}")]
    MissingSubspace(String),

    #[error("subspace {location} has {available} component(s), configuration requires {required}")]
    SubspaceTooSmall {
        location: String,
        available: usize,
        required: usize,
    },

    #[error("unknown configuration key \"{0}\"")]
    UnknownConfigKey(String),

    #[error("invalid configuration value for {key}: \"{value}\"")]
    InvalidConfigValue { key: String, value: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty benchmark")]
    EmptyBenchmark,

    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("zero rank variance: correlation undefined for a constant input")]
    ZeroRankVariance,

    #[error("correlation needs equal-length inputs of at least 3 samples (got {x_len} and {y_len})")]
    CorrelationInput { x_len: usize, y_len: usize },

    #[error("template {template_id} missing the \"<occupation>\" slot")]
    TemplateMissingSlot { template_id: u32 },

    #[error("triple {id}: {source}")]
    Triple {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn for_triple(id: &str, source: Error) -> Self {
        Error::Triple {
            id: id.to_string(),
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
