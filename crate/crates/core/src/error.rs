use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The two-level block has no population to redistribute.
    #[error("degenerate block on transition {0}-{1}: shared population {2} is not positive")]
    DegenerateBlock(usize, usize, f64),

    #[error("step size {dt} exceeds the limit {limit} (1/50 of the shortest nutation period)")]
    StepSize { dt: f64, limit: f64 },

    #[error("numerical failure at t = {t}: {reason}")]
    Numerical { t: f64, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
