use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate direction")]
    DegenerateDirection,

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("invalid robot model: {0}")]
    InvalidRobot(String),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("GJK did not converge within {0} iterations")]
    GjkNoConvergence(usize),

    #[error("EPA did not converge within {0} iterations")]
    EpaNoConvergence(usize),

    #[error("penetration depth requested for disjoint bodies")]
    NotIntersecting,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ill-conditioned Gram matrix (jitter escalated to {0:e})")]
    IllConditioned(f64),

    #[error("negative posterior variance {0:e}")]
    NegativeVariance(f64),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("start or goal in collision: {0}")]
    EndpointInCollision(String),

    #[error("no plan found within {0} iterations")]
    NoPlanFound(usize),

    #[error("solver divergence: {0}")]
    Divergence(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
