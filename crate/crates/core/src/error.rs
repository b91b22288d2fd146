use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at row {row}, column {column:?}: cannot read {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing feature value at row {row}, column {column:?}")]
    MissingFeature { row: usize, column: String },

    #[error("unknown class {class:?} for task {task:?} at row {row}")]
    UnknownClass {
        task: String,
        class: String,
        row: usize,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("unknown task {0:?}")]
    UnknownTask(String),

    #[error("task {task:?} must be {expected}")]
    TaskKind { task: String, expected: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("empty training set: {0}")]
    EmptyTrainingSet(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("task {task:?} unsupported at point: every tree abstains")]
    Abstained { task: String },

    #[error("stage {stage:?}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("reference label too close to zero for ratio at row {row_id:?} (|{value}| < {epsilon})")]
    NearZeroReference {
        row_id: String,
        value: f64,
        epsilon: f64,
    },

    #[error("unknown pretrained model handle {0:?}")]
    UnknownHandle(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("missing prediction for source task {0:?}")]
    MissingPrediction(String),

    #[error("unsupported format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(stage: impl Into<String>, source: Error) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(source),
        }
    }
}
