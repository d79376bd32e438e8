use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("run failed: {0}")]
    Run(#[from] payload_core::error::Error),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
    #[error("{failed} of {total} sweep cells failed")]
    SweepCells { failed: usize, total: usize },
}

impl CliError {
    /// 1 for bad configuration or input, 2 for failures during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 1,
            CliError::Run(_) | CliError::Output { .. } | CliError::SweepCells { .. } => 2,
        }
    }
}
