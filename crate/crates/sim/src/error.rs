use std::io;
use std::path::PathBuf;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    /// One or more config invariants do not hold; each entry is
    /// `field.path: reason`.
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error("round {round}: {source}")]
    Numeric {
        round: u32,
        source: robustfed_core::Error,
    },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(vec![msg.into()])
    }

    pub fn data(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        SimError::Data {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category label used in CLI messages.
    pub fn category(&self) -> &'static str {
        match self {
            SimError::Config(_) => "config",
            SimError::Data { .. } => "data",
            SimError::Numeric { .. } => "numeric",
            SimError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            SimError::Data { .. } => 3,
            SimError::Numeric { .. } => 4,
            SimError::Io { .. } => 5,
        }
    }
}
