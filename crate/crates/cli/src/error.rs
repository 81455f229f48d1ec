use std::path::Path;

/// Failure classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    /// Wraps a core error, prefixing `context`.
    pub fn core(context: &str, err: arhmm::Error) -> Self {
        let msg = format!("{context}: {err}");
        if err.is_numerical() {
            CliError::Numerical(msg)
        } else {
            CliError::Data(msg)
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
