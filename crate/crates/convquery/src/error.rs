//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConvQueryError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("corpus statistics require at least one document")]
    EmptyCorpus,

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("candidate pool is empty for this dialogue")]
    EmptyPool,

    #[error("knowledge candidate list is empty")]
    EmptyKnowledge,

    #[error("strategy {strategy} requires a retrieval for candidate {candidate:?}")]
    MissingRetrieval { strategy: String, candidate: String },

    #[error("query is empty after normalization")]
    EmptyQuery,

    #[error("cache miss for query {query:?} in strict-offline mode")]
    CacheMiss { query: String },

    #[error("search transport failure for {query:?} after {attempts} attempts: {message}")]
    Transport {
        query: String,
        attempts: u32,
        message: String,
    },

    #[error("pseudo-label index {label} out of range for turn {turn} with {candidates} candidates")]
    LabelOutOfRange {
        turn: usize,
        label: usize,
        candidates: usize,
    },

    #[error("length-normalized score requires at least one log-probability")]
    EmptyLogProbs,

    #[error("model file mismatch: {0}")]
    ModelFormat(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("evaluation requires at least one record")]
    EmptyRecords,

    #[error("stage {stage} failed: {cause}")]
    Stage { stage: String, cause: String },
}

impl ConvQueryError {
    /// One-word machine-parseable category for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            ConvQueryError::Io { .. } => "io",
            ConvQueryError::EmptyCorpus => "empty-corpus",
            ConvQueryError::EmptyCandidates => "empty-candidates",
            ConvQueryError::EmptyPool => "empty-pool",
            ConvQueryError::EmptyKnowledge => "empty-knowledge",
            ConvQueryError::MissingRetrieval { .. } => "missing-retrieval",
            ConvQueryError::EmptyQuery => "empty-query",
            ConvQueryError::CacheMiss { .. } => "cache-miss",
            ConvQueryError::Transport { .. } => "transport",
            ConvQueryError::LabelOutOfRange { .. } => "label-out-of-range",
            ConvQueryError::EmptyLogProbs => "empty-logprobs",
            ConvQueryError::ModelFormat(_) => "model-format",
            ConvQueryError::Parse { .. } => "parse",
            ConvQueryError::Config(_) => "config",
            ConvQueryError::EmptyRecords => "empty-records",
            ConvQueryError::Stage { .. } => "stage",
        }
    }
}
