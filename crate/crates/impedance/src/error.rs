use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("inconsistent geometry: {0}")]
    InconsistentGeometry(String),
    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),
    #[error("solve failed (k = {k}): {reason}")]
    SolveFailure { k: f64, reason: String },
    #[error("segment off grid: {0}")]
    SegmentOffGrid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("lambda out of range: {0}")]
    LambdaOutOfRange(String),
    #[error("coherent-state cutoff too tight: tail mass {tail:e} exceeds 1e-8")]
    CutoffTooTight { tail: f64 },
    #[error("glancing ray: xi' = {xi}")]
    GlancingRay { xi: f64 },
    #[error("no witness found: {0}")]
    NoWitnessFound(String),
    #[error("invalid strip layout: {0}")]
    LayoutInvalid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
