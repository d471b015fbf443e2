use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown {kind} id {id:?}")]
    DanglingId {
        path: PathBuf,
        line: usize,
        kind: &'static str,
        id: String,
    },

    #[error("{path}:{line}: duplicate triple ({head}, {rel}, {tail})")]
    DuplicateTriple {
        path: PathBuf,
        line: usize,
        head: String,
        rel: String,
        tail: String,
    },

    #[error("{path}:{line}: duplicate {kind} id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        kind: &'static str,
        id: String,
    },

    #[error("invalid language tag {0:?}")]
    InvalidLanguageTag(String),

    #[error("{kind} {id:?} has an empty surface form for {lang}")]
    EmptySurface {
        kind: &'static str,
        id: String,
        lang: String,
    },

    #[error("{kind} {id:?} not found")]
    UnknownId { kind: &'static str, id: String },

    #[error("{kind} {id:?} has no surface form in {lang}")]
    MissingForm {
        kind: &'static str,
        id: String,
        lang: String,
    },

    #[error("language pair must be distinct, got {0} twice")]
    SameLanguage(String),

    #[error("requested {requested} triples but only {available} are renderable")]
    InsufficientTriples { requested: usize, available: usize },

    #[error("kind weights must be non-negative with a positive sum")]
    InvalidWeights,

    #[error("rendered length {len} exceeds max_len {max_len}")]
    Overflow { len: usize, max_len: usize },

    #[error("question of {tokens} tokens does not fit max_len {max_len}")]
    QuestionTooLong { tokens: usize, max_len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("token id {id} out of range for vocab of {vocab_size}")]
    IdOutOfRange { id: usize, vocab_size: usize },

    #[error("position {position} out of range for sequence of {len}")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("batch has no masked positions")]
    NoMaskedPositions,

    #[error("gold position {0} is outside the valid span positions")]
    GoldMasked(usize),

    #[error("answer {answer:?} at char {start} cannot be located in the context")]
    Unlocatable { answer: String, start: usize },

    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("lexicon collision for {lang} after {attempts} attempts")]
    Collision { lang: String, attempts: usize },

    #[error("cannot sample {requested} distinct triples from {capacity} possible")]
    Infeasible { requested: usize, capacity: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("hash mismatch: {what} expects {expected}, found {found}")]
    HashMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("dataset format error: {0}")]
    Dataset(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-friendly name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::DanglingId { .. } => "dangling_id",
            Error::DuplicateTriple { .. } => "duplicate_triple",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::InvalidLanguageTag(_) => "invalid_language_tag",
            Error::EmptySurface { .. } => "empty_surface",
            Error::UnknownId { .. } => "unknown_id",
            Error::MissingForm { .. } => "missing_form",
            Error::SameLanguage(_) => "same_language",
            Error::InsufficientTriples { .. } => "insufficient_triples",
            Error::InvalidWeights => "invalid_weights",
            Error::Overflow { .. } => "overflow",
            Error::QuestionTooLong { .. } => "question_too_long",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::IdOutOfRange { .. } => "id_out_of_range",
            Error::PositionOutOfRange { .. } => "position_out_of_range",
            Error::NonFinite(_) => "non_finite",
            Error::NoMaskedPositions => "no_masked_positions",
            Error::GoldMasked(_) => "gold_masked",
            Error::Unlocatable { .. } => "unlocatable_answer",
            Error::Divergence { .. } => "divergence",
            Error::Empty(_) => "empty",
            Error::Config(_) => "config",
            Error::Collision { .. } => "collision",
            Error::Infeasible { .. } => "infeasible",
            Error::Checkpoint(_) => "checkpoint",
            Error::HashMismatch { .. } => "hash_mismatch",
            Error::Dataset(_) => "dataset",
        }
    }
}
