//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown node {node}")]
    UnknownNode { node: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("insufficient candidates: requested {requested}, only {available} available")]
    InsufficientCandidates { requested: usize, available: usize },

    #[error("singular R factor at step {step}: zero diagonal entry {index}")]
    SingularR { step: usize, index: usize },

    #[error("eigenvalue solver failed to converge")]
    EigenSolverFailure,

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("non-finite state at step {step}")]
    BlowUp { step: usize },

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("empty series")]
    EmptySeries,

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("unknown nonlinearity: {0:?}")]
    UnknownNonlinearity(String),

    #[error("sinkhorn iterations did not converge after {max_iters} iterations")]
    NonConvergence { max_iters: usize },

    #[error("kernel matrix not positive definite after jitter escalation to {max_jitter}")]
    KernelNotPsd { max_jitter: f64 },

    #[error("objective evaluation failed at round {round}: {message}")]
    ObjectiveFailure {
        round: usize,
        message: String,
        /// (round, shape, scale, objective) rows completed before the abort.
        partial_history: Vec<(usize, f64, f64, f64)>,
    },

    #[error("pruning would empty the network")]
    WouldEmptyNetwork,

    #[error("split spec exceeds series length: needs {needed}, have {available}")]
    SpecOverflow { needed: usize, available: usize },

    #[error("parse error at row {row}, column {col}: {message}")]
    ParseError {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("zero signal power in channel {channel}")]
    ZeroSignalPower { channel: usize },

    #[error("singular system: features are collinear and ridge_lambda is zero")]
    SingularSystem,

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("pipeline failure at iteration {iteration}, step {step}: {source}")]
    Pipeline {
        iteration: usize,
        step: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wrap an error with pipeline iteration/step context.
    pub fn in_pipeline(self, iteration: usize, step: &str) -> Error {
        Error::Pipeline {
            iteration,
            step: step.to_string(),
            source: Box::new(self),
        }
    }
}
