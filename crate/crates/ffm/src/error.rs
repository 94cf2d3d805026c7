use std::io;
use std::path::PathBuf;

use crate::checkpoint::CheckpointError;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 2 config, 3 data (including unreadable or unwritable files),
    /// 4 numeric, 5 checkpoint.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Numeric(_) => 4,
            CliError::Checkpoint(_) => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<ffm_core::Error> for CliError {
    fn from(e: ffm_core::Error) -> Self {
        use ffm_core::Error as E;
        if e.is_numeric() {
            return CliError::Numeric(e.to_string());
        }
        match e {
            E::InvalidArgument(_) | E::WhiteNoiseRejected => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
