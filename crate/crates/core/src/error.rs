use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("container error in {path}: {msg}")]
    Container { path: PathBuf, msg: String },

    #[error("missing array `{0}` in container")]
    MissingArray(String),

    #[error("phantom does not fit in grid: {0}")]
    PhantomOutOfBounds(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("reconstruction diverged at iteration {iteration}: objective {objective:.6e} > 10x initial {initial:.6e}")]
    Diverged {
        iteration: usize,
        objective: f64,
        initial: f64,
    },

    #[error("patch extraction: {0}")]
    Patch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
