use eqm_core::EqmError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Compute(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Compute(_) | CliError::Io(_) => EXIT_COMPUTE,
        }
    }
}

impl From<EqmError> for CliError {
    fn from(e: EqmError) -> Self {
        match e {
            EqmError::Domain(_)
            | EqmError::Config(_)
            | EqmError::Parse { .. }
            | EqmError::Constraint(_)
            | EqmError::Growth(_) => CliError::Config(e.to_string()),
            EqmError::Eval(_) | EqmError::BandMissing { .. } | EqmError::Window(_) => {
                CliError::Compute(e.to_string())
            }
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Compute(format!("serialization failed: {e}"))
    }
}
