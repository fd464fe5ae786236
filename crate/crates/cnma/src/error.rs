use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] cnma_core::Error),

    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Clap(#[from] clap::Error),

    #[error("input {path} changed since the manifest was written (sha256 {expected}, now {actual})")]
    DigestMismatch { path: PathBuf, expected: String, actual: String },
}

impl CliError {
    /// 2 input error, 3 model error, 4 internal or numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) if e.is_input_error() => 2,
            CliError::Model(e) if e.is_numerical() => 4,
            CliError::Model(_) => 3,
            CliError::Write { .. } => 4,
            CliError::Clap(e) => e.exit_code(),
            _ => 2,
        }
    }
}
