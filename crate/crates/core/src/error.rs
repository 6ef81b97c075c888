use thiserror::Error;

/// Errors raised by the sampler, the generators and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("matrix completion did not converge after {iterations} sweeps (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("numeric failure at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty chain: {0}")]
    EmptyChain(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable category, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) | Error::Config(_) => "config",
            Error::Input(_) | Error::Parse { .. } | Error::Io { .. } | Error::EmptyChain(_) => {
                "data"
            }
            Error::Domain(_)
            | Error::Convergence { .. }
            | Error::Unsupported(_)
            | Error::Numeric(_)
            | Error::AtIteration { .. } => "numeric",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
