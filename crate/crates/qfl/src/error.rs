use std::fmt;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config (exit 2).
    Usage(String),
    /// The run itself broke: IO, non-finite training, violated contracts (exit 1).
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

/// Invalid parameters are the caller's fault; everything else is a run failure.
impl From<qfl_core::Error> for CliError {
    fn from(e: qfl_core::Error) -> Self {
        use qfl_core::Error::*;
        match e {
            Input(_) | Shape(_) | Size { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Run(e.to_string()),
        }
    }
}
