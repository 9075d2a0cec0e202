use thiserror::Error;

/// Every failure the pipeline can surface.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration produced a non-finite state at step {step}")]
    Integration { step: usize },

    #[error("assembly failed: every sample of box {0} hit an integration error")]
    Assembly(usize),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("stationary distribution is not unique: {classes} closed classes")]
    NotUnique { classes: usize },

    #[error("degenerate chain: {0}")]
    Degenerate(String),

    #[error("iterative eigensolver did not converge; worst residual {worst:e} after {restarts} restarts")]
    Eigen { worst: f64, restarts: usize },

    #[error("sign structure yields only {achievable} components, {requested} requested")]
    Partition { achievable: usize, requested: usize },

    #[error("sweep failed at p = {p}: {cause}")]
    Sweep { p: f64, cause: Box<Error> },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit status: 1 for bad input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Sweep { cause, .. } => cause.exit_code(),
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
