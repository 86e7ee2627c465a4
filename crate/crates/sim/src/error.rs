use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("output {0} already exists (pass --force to overwrite)")]
    OutputExists(PathBuf),
    #[error(transparent)]
    Core(#[from] starnoma_core::Error),
    #[error("csv {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }

    /// Process exit code: 2 for a refused overwrite, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            SimError::OutputExists(_) => 2,
            _ => 1,
        }
    }
}

pub type SimResult<T> = std::result::Result<T, SimError>;
