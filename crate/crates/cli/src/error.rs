use std::fmt;

use anticipation::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Other = 1,
    Config = 2,
    Input = 3,
    Numeric = 4,
    Empty = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ExitCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(m: impl Into<String>) -> Self {
        Self::new(ExitCode::Config, m)
    }

    pub fn input(m: impl Into<String>) -> Self {
        Self::new(ExitCode::Input, m)
    }

    pub fn empty(m: impl Into<String>) -> Self {
        Self::new(ExitCode::Empty, m)
    }

    pub fn exit_code(&self) -> i32 {
        self.code as i32
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config { .. } => ExitCode::Config,
            Error::Parse { .. } | Error::Io { .. } | Error::Dimension(_) | Error::InvalidArgument(_) => {
                ExitCode::Input
            }
            Error::Numeric(_) => ExitCode::Numeric,
            Error::Empty(_) => ExitCode::Empty,
            Error::Serde(_) => ExitCode::Input,
        };
        Self::new(code, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
