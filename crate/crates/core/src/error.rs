use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the interpolation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported Matérn smoothness {0}; supported values are 1/2, 3/2, 5/2")]
    UnsupportedSmoothness(f64),

    #[error("unknown kernel '{0}'; expected one of matern12, matern32, matern52")]
    UnknownKernel(String),

    #[error("point cloud has {available} points but level {level} needs {required}")]
    InsufficientPoints {
        level: usize,
        required: usize,
        available: usize,
    },

    #[error("reference has zero norm")]
    ZeroReference,

    #[error(
        "conjugate gradients did not converge in {iterations} iterations \
         (relative residual {relative_residual:e})"
    )]
    NotConverged {
        iterations: usize,
        relative_residual: f64,
        best_iterate: Vec<f64>,
    },

    #[error(
        "matrix is not positive definite (curvature {curvature:e} at iteration {iteration}); \
         try a smaller threshold kappa"
    )]
    NotPositiveDefinite { iteration: usize, curvature: f64 },

    #[error(
        "nonpositive diagonal entry {value:e} at row {row}; diagonal preconditioning impossible"
    )]
    BadDiagonal { row: usize, value: f64 },

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{phase} failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("eigenvalue budget exceeded: N = {n} > {limit}; use the iterative estimate")]
    EigenBudget { n: usize, limit: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at_level(self, level: usize) -> Self {
        Error::AtLevel {
            level,
            source: Box::new(self),
        }
    }

    pub fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }

    /// Strips phase/level wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLevel { source, .. } | Error::Phase { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the iterative solve (as opposed to bad configuration or I/O).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::NotConverged { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::BadDiagonal { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
