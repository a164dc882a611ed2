use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    /// A policy returned a server that is full or not adjacent to the request.
    #[error("policy contract violation at request {request}: {message}")]
    ContractViolation { request: usize, message: String },

    /// The requested computation exceeds a solver's size limit.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("dual accounting residual {residual:e} exceeds tolerance at step {step}")]
    Accounting { step: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }
}
