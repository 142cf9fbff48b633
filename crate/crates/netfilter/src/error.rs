use std::fmt;
use std::path::Path;

use netfilter_core::Error as CoreError;

/// Process exit code for bad flags, inputs or settings.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for failures during computation or while writing output.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Runtime,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Config, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Runtime, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Runtime => EXIT_RUNTIME,
        }
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub(crate) fn read(path: &Path, err: impl fmt::Display) -> Self {
        CliError::config(format!("cannot read {}: {err}", path.display()))
    }

    pub(crate) fn write(path: &Path, err: impl fmt::Display) -> Self {
        CliError::runtime(format!("cannot write {}: {err}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match e {
            CoreError::DimensionMismatch { .. }
            | CoreError::IndexOutOfRange { .. }
            | CoreError::InvalidConfig(_)
            | CoreError::NodeOutOfRange { .. }
            | CoreError::TooFewSamples { .. }
            | CoreError::InvalidLambda(_) => ErrorKind::Config,
            CoreError::NotPositiveDefinite { .. }
            | CoreError::NonFinite
            | CoreError::DomainError(_)
            | CoreError::SingularBlock { .. }
            | CoreError::ZeroVariance => ErrorKind::Runtime,
        };
        CliError { kind, message: e.to_string() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let e: CliError = CoreError::TooFewSamples { needed: 2, found: 1 }.into();
        assert_eq!(e.exit_code(), 2);
        assert!(e.message.contains("too few samples"));
        let e: CliError = CoreError::NotPositiveDefinite { pivot: 3 }.into();
        assert_eq!(e.exit_code(), 3);
        assert_eq!(CliError::config("x").context("reading").message, "reading: x");
    }
}
