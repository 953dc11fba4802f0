use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("jet order {requested} requested but only orders 0..={valid} are valid")]
    InsufficientJetOrder { requested: usize, valid: usize },

    #[error("singular resolvent 1 - h*b'(x) at x = {x}, h = {h}")]
    SingularResolvent { x: f64, h: f64 },

    #[error("step size h = {h} violates the guard h * lip_b <= 0.5 (lip_b = {lip_b})")]
    StepSizeGuard { h: f64, lip_b: f64 },

    #[error("implicit solve did not converge after {iters} iterations (residual {residual:e}){}", location(*.step, *.path))]
    NoConvergence {
        iters: usize,
        residual: f64,
        step: Option<usize>,
        path: Option<u64>,
    },

    #[error("invalid solver: {0}")]
    InvalidSolver(String),

    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rate fit needs at least {required} usable points, got {usable}")]
    TooFewPoints { usable: usize, required: usize },

    #[error("unmatched levels: {0}")]
    UnmatchedLevels(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn location(step: Option<usize>, path: Option<u64>) -> String {
    match (step, path) {
        (Some(k), Some(p)) => format!(" at step {k} of path {p}"),
        (Some(k), None) => format!(" at step {k}"),
        (None, Some(p)) => format!(" on path {p}"),
        (None, None) => String::new(),
    }
}

impl Error {
    /// Attaches the failing grid index to a convergence failure.
    pub fn at_step(self, k: usize) -> Self {
        match self {
            Error::NoConvergence { iters, residual, path, .. } => Error::NoConvergence {
                iters,
                residual,
                step: Some(k),
                path,
            },
            other => other,
        }
    }

    pub fn on_path(self, index: u64) -> Self {
        match self {
            Error::NoConvergence { iters, residual, step, .. } => Error::NoConvergence {
                iters,
                residual,
                step,
                path: Some(index),
            },
            other => other,
        }
    }

    /// Process exit code: 2 precondition/config, 3 numerical failure, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoConvergence { .. } | Error::SingularResolvent { .. } => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }
}
