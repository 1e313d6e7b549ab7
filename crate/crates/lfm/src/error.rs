use crate::format::FormatError;

/// Command failure, classified by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<lfm_core::Error> for CliError {
    fn from(e: lfm_core::Error) -> Self {
        use lfm_core::Error as E;
        match e {
            E::InvalidImbalance(_)
            | E::TooFewClasses { .. }
            | E::EmptyTail { .. }
            | E::InvalidTemperature(_)
            | E::StepOutOfRange { .. }
            | E::InvalidParameter(_)
            // a diverging run is fixed by lowering the learning rate
            | E::Diverged { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
