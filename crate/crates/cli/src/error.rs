use std::fmt;

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config (exit 2).
    Config(String),
    /// Unreadable or inconsistent input data, or unwritable outputs (exit 3).
    Data(String),
    /// A learner failed (exit 4).
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
        }
    }

    pub fn data(stage: &str, e: impl fmt::Display) -> Self {
        CliError::Data(format!("{stage}: {e}"))
    }

    pub fn training(stage: &str, e: impl fmt::Display) -> Self {
        CliError::Training(format!("{stage}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Training(m) => write!(f, "training failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
