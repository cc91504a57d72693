use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FusionError>;

#[derive(Debug, Error)]
pub enum FusionError {
    /// A parameter state produced a non-finite value where a finite one is required.
    #[error("corrupt parameter state: {0}")]
    CorruptState(String),

    #[error("annotator index {annotator} out of range (have {count} annotators)")]
    UnknownAnnotator { annotator: usize, count: usize },

    #[error("category {value} out of range for {categories} categories")]
    InvalidCategory { value: usize, categories: usize },

    #[error("confidence element {index} is {value}; apply zeta_adjust before evaluating the density")]
    NonPositiveConfidence { index: usize, value: f64 },

    #[error("not a simplex vector: {0}")]
    InvalidSimplex(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("{file}:{row}: {message}")]
    Data {
        file: String,
        row: usize,
        message: String,
    },

    #[error("replicate {replicate} failed: {source}; completed replicates are checkpointed in {checkpoint}")]
    Replicate {
        replicate: usize,
        checkpoint: PathBuf,
        #[source]
        source: Box<FusionError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl FusionError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FusionError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(file: impl Into<String>, row: usize, message: impl Into<String>) -> Self {
        FusionError::Data {
            file: file.into(),
            row,
            message: message.into(),
        }
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            FusionError::CorruptState(_) => "corrupt_state",
            FusionError::UnknownAnnotator { .. } => "unknown_annotator",
            FusionError::InvalidCategory { .. } => "invalid_category",
            FusionError::NonPositiveConfidence { .. } => "non_positive_confidence",
            FusionError::InvalidSimplex(_) => "invalid_simplex",
            FusionError::DimensionMismatch { .. } => "dimension_mismatch",
            FusionError::Config(_) => "config",
            FusionError::DegenerateState(_) => "degenerate_state",
            FusionError::EmptyDataset => "empty_dataset",
            FusionError::VariantMismatch(_) => "variant_mismatch",
            FusionError::NotApplicable(_) => "not_applicable",
            FusionError::Numerical(_) => "numerical",
            FusionError::Data { .. } => "data",
            FusionError::Replicate { .. } => "replicate",
            FusionError::Io { .. } => "io",
            FusionError::Csv(_) => "csv",
            FusionError::Json(_) => "json",
            FusionError::Toml(_) => "toml",
        }
    }
}
