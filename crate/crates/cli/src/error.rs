use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// Prefixes a JSON parse failure with `path:line:column`.
    pub(crate) fn json(path: &Path, err: serde_json::Error) -> Self {
        let full = err.to_string();
        let suffix = format!(" at line {} column {}", err.line(), err.column());
        let msg = full.strip_suffix(&suffix).unwrap_or(&full);
        CliError::Validation(format!(
            "{}:{}:{}: {msg}",
            path.display(),
            err.line(),
            err.column()
        ))
    }

    pub(crate) fn core(context: &Path, err: gradvac_core::Error) -> Self {
        match err {
            gradvac_core::Error::Numerical { .. } => {
                CliError::Numerical(format!("{}: {err}", context.display()))
            }
            other => CliError::Validation(format!("{}: {other}", context.display())),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
