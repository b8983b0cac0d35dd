use thiserror::Error;

/// Errors produced by the estimation, warping, loss and evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("translation is zero; the essential matrix is undefined for pure rotation")]
    ZeroTranslation,
    #[error("matrix is not a valid essential matrix: {0}")]
    InvalidEssential(String),
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("insufficient correspondences: need at least {needed}, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },
    #[error("no model found: every sampled minimal set was degenerate")]
    NoModelFound,
    #[error("ambiguous cheirality: the best two pose hypotheses tie")]
    AmbiguousCheirality,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("degenerate inverse depth: mean {0} is not positive")]
    DegenerateDepth(f64),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("validity mask is empty")]
    EmptyMask,
    #[error("degenerate scale: predicted translations are all zero")]
    DegenerateScale,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("insufficient static area: {available} static pixels, {requested} requested")]
    InsufficientStaticArea { available: usize, requested: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
