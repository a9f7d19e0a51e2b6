use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Syntax { path: PathBuf, line: usize, column: usize, message: String },
    #[error("bad expression in `{key}`: {source}")]
    Expression { key: String, source: nagumo_core::ParseError },
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("unresolved reference `{name}` in `{key}`")]
    Unresolved { key: String, name: String },
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("check `{check}` failed to run: {source}")]
    Check { check: String, source: nagumo_core::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Process exit status for this error: 2 for input problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check { .. } | CliError::Write { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn invalid(key: impl Into<String>, message: impl ToString) -> Self {
        CliError::Invalid { key: key.into(), message: message.to_string() }
    }
}
