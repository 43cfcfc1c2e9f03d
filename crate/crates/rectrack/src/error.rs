use std::path::PathBuf;

/// Failures from file formats, configuration and the command layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] rectrack_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// 2 for bad input of any kind, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Format(_) | Error::Config(_) | Error::Usage(_) => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            Error::Core(rectrack_core::Error::Usage(_) | rectrack_core::Error::Shape(_)) => 2,
            Error::Io { .. } | Error::Core(_) => 1,
        }
    }
}
