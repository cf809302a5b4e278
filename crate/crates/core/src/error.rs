use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("ODE solver failure: {0}")]
    Solver(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("jump rate {rate:.3e} exceeds cap {cap:.3e} (eps too small?)")]
    RateCap { rate: f64, cap: f64 },
}

pub type Result<T> = std::result::Result<T, FlowError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(FlowError::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(FlowError::Config(msg.into()))
}
