use std::fmt;

use coorbit::CoorbitError;

pub const EXIT_IO: i32 = 2;
pub const EXIT_CERTIFICATION: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn io(message: impl Into<String>) -> Self {
        CliError { code: EXIT_IO, message: message.into() }
    }

    /// Bad configuration is reported like unreadable input.
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_IO, message: message.into() }
    }

    pub fn certification(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CERTIFICATION, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CoorbitError> for CliError {
    fn from(e: CoorbitError) -> Self {
        let code = match e {
            CoorbitError::NotAdmissible { .. }
            | CoorbitError::NotControlWeight(_)
            | CoorbitError::NotDense { .. }
            | CoorbitError::CapReached { .. } => EXIT_CERTIFICATION,
            CoorbitError::Diverged { .. } => EXIT_DIVERGED,
            _ => EXIT_IO,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}
