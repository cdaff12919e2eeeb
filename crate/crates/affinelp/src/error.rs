use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("hankel depth {depth} exceeds sequence length {length}")]
    HankelDepth { depth: usize, length: usize },

    #[error("svd did not converge")]
    Svd,

    #[error("singular system (residual {residual:.3e})")]
    Singular { residual: f64 },

    #[error("inconsistent system (residual {residual:.3e})")]
    Inconsistent { residual: f64 },

    #[error("invalid {0}")]
    Invalid(String),

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error(
        "pair (sqrt(gamma) A, sqrt(gamma) B) is not stabilizable: \
         mode with |lambda| = {modulus:.6} fails the PBH rank test"
    )]
    NotStabilizable { modulus: f64 },

    #[error(
        "riccati iteration did not converge within {max_iter} iterations \
         (last increment {increment:.3e})"
    )]
    RiccatiNonConvergence { max_iter: usize, increment: f64 },

    #[error("rank condition failed: rank {found}, required {required}")]
    RankCondition { found: usize, required: usize },

    #[error("dataset carries nonzero recorded noise; {0} requires deterministic data")]
    StochasticData(&'static str),

    #[error("dataset is not a single trajectory")]
    NotSingleTrajectory,

    #[error("lp solver: {0}")]
    LpSolver(String),

    #[error("lp pivot limit of {limit} reached during {phase}")]
    LpIterationLimit { limit: usize, phase: &'static str },

    #[error("policy extraction failed: {0}")]
    PolicyExtraction(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
