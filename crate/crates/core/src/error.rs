use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("manifest line {line}: {message}")]
    Manifest { line: u64, message: String },

    #[error("duplicate episode id {0:?}")]
    DuplicateEpisode(String),

    #[error("signal for episode {episode:?} not found at {path}")]
    MissingSignal { episode: String, path: PathBuf },

    #[error("signal for episode {episode:?}: {message}")]
    Signal { episode: String, message: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("cannot split {available} {unit} into {splits} splits")]
    TooFewForSplit { available: usize, unit: &'static str, splits: usize },

    #[error("synthetic spec: {0}")]
    Synthetic(String),

    #[error("vocabulary: {0}")]
    Vocabulary(String),

    #[error("report has {tokens} tokens, at most {max} fit between start and end markers")]
    ReportTooLong { tokens: usize, max: usize },

    #[error("shape: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite loss")]
    Divergence { epoch: usize, batch: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(vec![message.into()])
    }

    /// Short stable identifier used in machine-readable CLI output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Manifest { .. } => "manifest",
            Error::DuplicateEpisode(_) => "duplicate_episode",
            Error::MissingSignal { .. } => "missing_signal",
            Error::Signal { .. } => "signal",
            Error::EmptyCorpus => "empty_corpus",
            Error::InvalidRatios(_) => "invalid_ratios",
            Error::TooFewForSplit { .. } => "too_few_for_split",
            Error::Synthetic(_) => "synthetic_spec",
            Error::Vocabulary(_) => "vocabulary",
            Error::ReportTooLong { .. } => "report_too_long",
            Error::Shape(_) => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::Config(_) => "invalid_config",
            Error::Checkpoint { .. } => "checkpoint",
            Error::Divergence { .. } => "divergence",
            Error::Unsupported(_) => "unsupported",
        }
    }
}
