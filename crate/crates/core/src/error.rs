use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("unknown label {label:?} on line {line}")]
    UnknownLabel { label: String, line: usize },

    #[error("no tokens survived filtering; cannot build a vocabulary")]
    EmptyVocabulary,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("model uses domain-specific bias but no label distribution was supplied")]
    MissingLabelDistribution,

    #[error("model uses domain-specific normalization but no feature means were supplied")]
    MissingFeatureMeans,

    #[error("label distribution has zero probability for class {class}; estimate it with smoothing (alpha > 0)")]
    ZeroProbability { class: usize },

    #[error("instance {0} has no label")]
    Unlabeled(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at iteration {iter} (loss is not finite); try a smaller learning_rate")]
    Diverged { iter: usize },

    #[error("weight index out of range: ({row}, {col}) in a {rows}x{cols} matrix")]
    WeightIndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("unsupported model format_version {0}")]
    UnsupportedVersion(u64),

    #[error("invalid model file: {0}")]
    Format(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
