use thiserror::Error;

/// Errors raised by the modelling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("point {index} at ({x}, {y}) lies outside the mesh")]
    PointOutsideMesh { index: usize, x: f64, y: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("cholesky factorization failed at pivot {pivot}: matrix is not positive definite")]
    NotPositiveDefinite { pivot: usize },

    #[error("inner newton iterations did not converge after {iterations} steps (objective trace: {trace:?})")]
    NewtonDiverged { iterations: usize, trace: Vec<f64> },

    #[error("hyperparameter optimization failed: {message} (objective trace: {trace:?})")]
    OptimizerFailed { message: String, trace: Vec<f64> },

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    /// True when the failure is numerical rather than caused by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NewtonDiverged { .. }
                | Error::OptimizerFailed { .. }
                | Error::Simulation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
