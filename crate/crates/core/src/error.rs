use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown parameter `{0}` for this model")]
    UnknownParameter(String),

    #[error("path aborted at step {step}: {reason}")]
    PathAbort { step: usize, reason: String },

    #[error("weight undefined: {0}")]
    WeightUndefined(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("estimator failure: {0}")]
    EstimatorFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
