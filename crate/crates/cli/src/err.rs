//! CLI error split: configuration problems exit with code 2, runtime
//! failures with code 3.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Tag core errors with the exit category of the calling site.
pub trait Ctx<T> {
    fn cfg(self) -> CliResult<T>;
    fn run(self) -> CliResult<T>;
}

impl<T, E: fmt::Display> Ctx<T> for Result<T, E> {
    fn cfg(self) -> CliResult<T> {
        self.map_err(|e| CliError::Config(e.to_string()))
    }

    fn run(self) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(e.to_string()))
    }
}
