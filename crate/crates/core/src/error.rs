use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the process exit codes used by the CLI: invalid
/// input/models exit with 2, assumption-gate failures with 3, and numerical
/// failures with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot project a (numerically) zero vector")]
    ZeroVector,

    #[error("matrix annihilates the state (norm below 1e-150)")]
    Annihilation,

    #[error("dead state: {0}")]
    DeadState(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("channel has {dim} independent fixed points; (phi-Erg) does not hold")]
    MultipleFixedPoints { dim: usize },

    #[error("assumption gate: {0}")]
    AssumptionGate(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 invalid input, 3 assumption-gate
    /// failure, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::InvalidModel(_)
            | Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::ZeroVector
            | Error::Budget(_)
            | Error::Parse { .. }
            | Error::Io(_) => 2,
            Error::MultipleFixedPoints { .. } | Error::AssumptionGate(_) => 3,
            Error::Annihilation
            | Error::DeadState(_)
            | Error::NumericalFailure(_)
            | Error::InsufficientResolution(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
