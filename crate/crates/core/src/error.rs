use thiserror::Error;

/// Errors raised by model construction, operator assembly and the checks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("frequency |t| = {norm} exceeds eps0 = {eps0}")]
    FrequencyOutOfRange { norm: f64, eps0: f64 },

    #[error("truncation K = {truncation} is below the observable bandwidth {bandwidth}")]
    TruncationTooSmall { truncation: usize, bandwidth: usize },

    #[error("top eigenvalue is not simple: leading moduli {first} and {second}")]
    DegenerateTopEigenvalue { first: f64, second: f64 },

    #[error("pairing <xi0, u2> vanishes ({0:e}); the family is not a valid coding")]
    VanishingPairing(f64),

    #[error("exponential decay fit failed: {0}")]
    DecayFitFailed(String),

    #[error("level n = {n} is too small for the schedule: {reason}")]
    LevelTooSmall { n: u32, reason: String },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is singular")]
    Singular,

    #[error("combined support has {size} points, the exact search is limited to {limit}")]
    SupportTooLarge { size: usize, limit: usize },

    #[error("distributions do not share a common support")]
    MismatchedSupports,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("path of length {len} does not cover index {needed}")]
    PathTooShort { len: usize, needed: usize },

    #[error("characteristic-function grids do not match")]
    GridMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("model file: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
