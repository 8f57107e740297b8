use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("point is not feasible: {0}")]
    Infeasible(String),

    #[error("feasible set is empty: {0}")]
    EmptySet(String),

    #[error("projection did not converge after {iterations} iterations (residual {residual:e})")]
    ProjectionNonconvergence { iterations: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("reduced problem is empty: no free variables")]
    EmptyFace,

    #[error("nonpositive curvature {0:e} met by a solver that requires a positive definite operator")]
    NonpositiveCurvature(f64),

    #[error("zero direction")]
    ZeroDirection,

    #[error("parse error at line {line}, token {token}: {message}")]
    Parse {
        line: usize,
        token: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("profile needs at least one problem and one method: {0}")]
    InvalidProfile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
