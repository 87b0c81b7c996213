use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("backward already ran on this tape; record a new forward pass first")]
    BackwardTwice,

    #[error("backward target must hold exactly one element, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("parameter collection is frozen; refusing to update it")]
    Frozen,

    #[error("audio parameters must be frozen before fusion training")]
    AudioNotFrozen,

    #[error("parameter {0:?} not found")]
    MissingParam(String),

    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("malformed WAV header in {path}: {detail}", path = .path.display())]
    MalformedWav { path: PathBuf, detail: String },

    #[error("unsupported WAV encoding in {path}: {detail}", path = .path.display())]
    UnsupportedWav { path: PathBuf, detail: String },

    #[error("clip too short: {len} samples, need at least {needed}")]
    ClipTooShort { len: usize, needed: usize },

    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),

    #[error("frame sequence error: {0}")]
    Frames(String),

    #[error("image error in {path}: {source}", path = .path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}:{line}: {detail}", path = .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid label {0}: expected 0 or 1")]
    InvalidLabel(f64),

    #[error("score {0} outside the 0..=63 range")]
    ScoreOutOfRange(f64),

    #[error("labels contain a single class; ROC needs both")]
    SingleClass,

    #[error("non-finite loss at epoch {epoch}, step {step}: {value}")]
    NonFiniteLoss { epoch: usize, step: usize, value: f64 },

    #[error("dataset too small: {0} samples, need at least 10")]
    DatasetTooSmall(usize),

    #[error("split {0} is empty")]
    EmptySplit(&'static str),

    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(detail: impl Into<String>) -> Self {
        Error::Config(detail.into())
    }

    pub fn in_sample(self, id: &str) -> Self {
        Error::Sample {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}
