use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("model: {0}")]
    Model(#[from] endodyn_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A certified condition failed beyond tolerance. The report has already
    /// been written when this is returned.
    #[error("diagnostics: {0}")]
    Violation(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(_) | CliError::Io { .. } => 3,
            CliError::Violation(_) => 4,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
