use std::fmt;

/// Pipeline errors, split by exit code: configuration problems exit 2,
/// data/runtime problems exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(biphoton_core::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Data(e) => write!(f, "data error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<biphoton_core::Error> for CliError {
    fn from(e: biphoton_core::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(biphoton_core::Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
