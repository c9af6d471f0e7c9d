use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input")]
    EmptyInput,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("vacuum formed at t = {t}: min tau <= 0 even with dt = {dt}")]
    VacuumFormed { t: f64, dt: f64 },

    #[error("maximum step count {0} exceeded")]
    MaxSteps(usize),

    #[error("root bracket expansion failed: {0}")]
    Bracket(String),

    #[error("small-parameter selection failed after {0} halvings")]
    Selection(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
