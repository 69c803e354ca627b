use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("schema error in column `{column}` at row {row}: {message}")]
    Schema {
        column: String,
        row: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("cannot split: {0}")]
    Split(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, found {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("class index {class} out of range for {n_classes} classes")]
    InvalidClass { class: usize, n_classes: usize },

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("vector is not on the probability simplex (sum = {0})")]
    NotSimplex(f64),

    #[error("exact Shapley enumeration limited to {max} features, got {d}")]
    TooManyFeatures { d: usize, max: usize },

    #[error("background dataset is empty")]
    EmptyBackground,

    #[error("index {index} out of range for {len} instances")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("prototype set is empty")]
    EmptyPrototypes,

    #[error("class `{class}` has {size} members but {required} are required")]
    ClassTooSmall {
        class: String,
        size: usize,
        required: usize,
    },

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("unsupported forest format version {0}")]
    UnsupportedVersion(u32),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

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

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Name of the pipeline stage that failed, when known.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
