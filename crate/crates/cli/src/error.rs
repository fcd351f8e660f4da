use std::path::{Path, PathBuf};

use invalid_iv::IvError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("method {method}: {message}")]
    MethodOption { method: String, message: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Estimation(#[from] IvError),
}

impl CliError {
    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), message: err.to_string() }
    }

    /// Process exit code: every error surfaced here is an input, configuration or
    /// parse problem.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// One-based line of a byte offset.
pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Converts a TOML error into a located parse error.
pub(crate) fn toml_error(path: &Path, text: &str, err: toml::de::Error) -> CliError {
    let line = err.span().map(|s| line_of(text, s.start)).unwrap_or(0);
    CliError::parse(path, line, err.message().to_string())
}
