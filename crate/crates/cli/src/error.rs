use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] eegdit::Error),
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 1 for usage and config problems, 2 for numerical failure, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        use eegdit::Error as E;
        match self {
            CliError::Io(_) => 3,
            CliError::Core(E::Io(_) | E::BadMagic { .. } | E::Version { .. } | E::Truncated(_) | E::Corrupt(_)) => 3,
            CliError::Core(E::NonFinite(_) | E::Diverged { .. }) => 2,
            CliError::Json { source, .. } if source.is_io() => 3,
            _ => 1,
        }
    }
}
