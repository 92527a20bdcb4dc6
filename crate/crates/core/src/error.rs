use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse: axis {axis} has {n} cells (need at least 4)")]
    GridTooCoarse { axis: usize, n: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("elliptic solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("non-finite state at step {step}")]
    NonFinite { step: u64 },
    #[error("constraint residual {residual:e} exceeds tolerance {tol:e} at step {step}")]
    Constraint { step: u64, residual: f64, tol: f64 },
    #[error("test function support violates margin: {0}")]
    SupportMargin(String),
    #[error("config error(s):\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}
