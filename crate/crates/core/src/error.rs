use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("scene too sparse: generated {0} points, need at least 1000")]
    DensityTooLow(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("cloud has no intensity channel")]
    MissingIntensity,

    #[error("image too small: {width}x{height}, need at least 3x3")]
    ImageTooSmall { width: usize, height: usize },

    #[error("image dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("no valid pixel pairs for histogram")]
    EmptyOverlap,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("batch too small for train-mode normalization: {0}")]
    BatchTooSmall(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("too few frames: split {0} would be empty")]
    TooFewFrames(&'static str),

    #[error("render produced an empty depth image")]
    RenderEmpty,

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
