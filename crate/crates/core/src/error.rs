use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A truncation interval carrying (numerically) no probability mass.
    #[error("degenerate interval [{lo}, {hi}]: mass {mass:e} below floor")]
    DegenerateInterval { lo: f64, hi: f64, mass: f64 },

    /// Inputs violate a structural precondition (bad order, non-even mechanism, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("zero density at x2 = {0}")]
    ZeroDensity(f64),

    #[error(
        "quadrature did not reach tolerance on {context}: estimate {estimate:e}, \
         error {error:e} after {subdivisions} subdivisions"
    )]
    Tolerance {
        context: String,
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("fetch failed for {what}: {message}")]
    Fetch { what: String, message: String },

    #[error("pair {id} not found at {url}")]
    NotFound { id: u32, url: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Contract(_) | Error::Unsupported(_) | Error::Parse { .. } => 2,
            Error::DegenerateInterval { .. } | Error::ZeroDensity(_) | Error::Tolerance { .. } | Error::Numeric(_) => 3,
            Error::Fetch { .. } | Error::NotFound { .. } | Error::Io(_) => 4,
        }
    }
}
