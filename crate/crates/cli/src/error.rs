use std::fmt;

use ttn::Error;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INCOMPATIBLE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn incompatible(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INCOMPATIBLE,
            message: message.into(),
        }
    }

    /// Prefixes the message, keeping the code.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Self {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Domain(_) | Error::Layout(_) => EXIT_USAGE,
            Error::NumericDomain(_) | Error::NumericFailure { .. } | Error::NotIsometric { .. } => EXIT_NUMERIC,
            Error::LayoutMismatch { .. }
            | Error::Format { .. }
            | Error::Shape(_)
            | Error::ContractionShape { .. }
            | Error::CacheInvalid { .. }
            | Error::Io(_) => EXIT_INCOMPATIBLE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Output files that cannot be written are usage errors.
pub fn write_failed(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::usage(format!("cannot write {}: {e}", path.display()))
}
