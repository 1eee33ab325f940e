use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("outside the domain of {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error(
        "integration failed at t = {time:.6}: {reason} (max |u| = {max_u:.3e}, max |v| = {max_v:.3e})"
    )]
    Integration {
        time: f64,
        max_u: f64,
        max_v: f64,
        reason: String,
    },

    #[error("too few samples: need {needed}, have {have}")]
    TooFewSamples { needed: usize, have: usize },

    #[error("degenerate least-squares problem: {0}")]
    Degenerate(String),

    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    #[error("profile keeps translating at {drift:.3e} per unit time; speed is not critical")]
    Drift { drift: f64 },

    #[error("root tracking failed: {0}")]
    RootTracking(String),

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("regime mismatch: {0}")]
    Regime(String),

    #[error("singular matrix at pivot {0}")]
    Singular(usize),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Config problems map to exit status 2, everything else to 1.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
