use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("episode already finished; call reset before stepping")]
    EpisodeFinished,

    #[error("valence {valence} cannot be scripted for environment {env}")]
    Unscriptable { env: String, valence: String },

    #[error("communicated value must be non-zero to define a valence")]
    ZeroValue,

    #[error("model is frozen; parameters and memory are read-only")]
    Frozen,

    #[error("model must be frozen before inference")]
    NotFrozen,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("window length {got} does not match configured length {expected}")]
    WindowLength { expected: usize, got: usize },

    #[error("memory has no written slots")]
    EmptyMemory,

    #[error("environment mismatch: archive is for {found}, expected {expected}")]
    EnvMismatch { expected: String, found: String },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("output directory {0} holds a different experiment; pass --force to overwrite")]
    OutputConflict(PathBuf),

    #[error("insufficient samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Shape {
        op,
        detail: detail.into(),
    })
}
