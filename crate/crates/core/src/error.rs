use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |H - H^dag| = {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error(
        "truncation overflow: population {population:e} in the two highest Fock levels \
         exceeds {tolerance:e} at n_max = {n_max}"
    )]
    TruncationOverflow {
        population: f64,
        tolerance: f64,
        n_max: usize,
    },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integration produced non-finite values at t = {t}")]
    NonFinite { t: f64 },

    #[error("undecided: {0}")]
    Undecided(String),

    #[error("bisection bracket [{lo}, {hi}] does not straddle the transition: {reason}")]
    BracketFailure { lo: f64, hi: f64, reason: String },

    #[error("outside module scope: {0}")]
    OutOfScope(String),

    #[error("unknown figure id `{0}`")]
    UnknownFigure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
