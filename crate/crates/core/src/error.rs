use thiserror::Error;

/// Errors raised by the kernels, integrators and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entries in {0}")]
    Domain(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("nonlinearity does not provide a Jacobian-vector product")]
    MissingJacobian,

    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "reference oracle could not certify: gap {gap:e} exceeds {tol:e} at h_ref = {h_ref:e}"
    )]
    Oracle { gap: f64, tol: f64, h_ref: f64 },

    #[error("singular matrix in linear solve")]
    Singular,

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
