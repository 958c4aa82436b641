use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parameter error: {0}")]
    Params(String),
    #[error("window mismatch: {0}")]
    Window(String),
    #[error("residual {residual:e} above tolerance {tolerance:e}: {context}")]
    Residual { residual: f64, tolerance: f64, context: String },
    #[error("cocycle unbounded on sample window: |c| reached {observed}, bound {bound}")]
    Unbounded { observed: f64, bound: f64 },
    #[error("datum does not match parameter branch: {0}")]
    BranchMismatch(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
