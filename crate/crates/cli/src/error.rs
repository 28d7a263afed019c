use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lgcp::Error),

    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Consistency(String),

    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

impl CliError {
    /// 0 success, 1 numerical failure, 2 input error, 3 consistency error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 1,
            CliError::Core(_) | CliError::Input(_) | CliError::Write { .. } => 2,
            CliError::Consistency(_) => 3,
        }
    }

    pub fn write(path: &Path, source: std::io::Error) -> Self {
        CliError::Write { path: path.display().to_string(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
