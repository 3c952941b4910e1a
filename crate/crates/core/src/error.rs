use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("estimator state error: {0}")]
    State(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error(
        "infeasible proximal weights: need w1 >= {min_w1:.6e} (got {w1:.6e}) and w2 >= {min_w2:.6e} (got {w2:.6e})"
    )]
    InfeasibleParams {
        w1: f64,
        w2: f64,
        min_w1: f64,
        min_w2: f64,
    },

    #[error("diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
