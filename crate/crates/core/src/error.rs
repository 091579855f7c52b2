use thiserror::Error;

/// Errors raised by the equilibrium-measure toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EqmError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("growth error: {0}")]
    Growth(String),
    #[error("constraint error: {0}")]
    Constraint(String),
    #[error("no band cells in interval {interval}")]
    BandMissing { interval: usize },
    #[error("fit window error: {0}")]
    Window(String),
}

pub type Result<T, E = EqmError> = std::result::Result<T, E>;
