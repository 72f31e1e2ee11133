use std::fmt;

use bellman_lqr::Error;
use serde::Serialize;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Failure reported as a JSON object on standard error.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, kind: &str, message: impl Into<String>) -> Self {
        CliError {
            code,
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, "ParseError", message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, "IoError", message)
    }

    /// Library error raised while validating user input.
    pub fn input(e: Error) -> Self {
        Self::new(EXIT_INPUT, e.kind(), e.to_string())
    }

    /// Library error raised while computing.
    pub fn compute(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_)
            | Error::InvalidInstance(_)
            | Error::DimensionMismatch(_)
            | Error::NonFinite(_) => EXIT_INPUT,
            Error::SingularMatrix { .. } | Error::NoConvergence => EXIT_NUMERICAL,
            _ => EXIT_DOMAIN,
        };
        Self::new(code, e.kind(), e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}
