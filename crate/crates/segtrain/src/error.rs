use std::path::{Path, PathBuf};

/// Errors raised by file handling, configuration and the runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] segtrain_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: usize, message: impl ToString) -> Self {
        Error::Parse { path: path.to_path_buf(), line, message: message.to_string() }
    }

    /// Process exit code: 2 config, 3 budget exceeded, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(segtrain_core::Error::BudgetExceeded { .. }) => 3,
            Error::Io { .. } | Error::Parse { .. } => 4,
            Error::Core(_) | Error::Config(_) => 2,
        }
    }
}
