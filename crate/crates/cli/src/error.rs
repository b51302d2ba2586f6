use std::fmt;

/// Exit status 2 for usage and configuration problems, 1 for failures while
/// computing.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<pvann_core::Error> for CliError {
    fn from(e: pvann_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Marks a core error raised while interpreting configuration or inputs.
pub trait UsageContext<T> {
    fn usage(self) -> Result<T, CliError>;
}

impl<T> UsageContext<T> for pvann_core::Result<T> {
    fn usage(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Usage(e.to_string()))
    }
}
