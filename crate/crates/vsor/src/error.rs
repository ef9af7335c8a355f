use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed PGM: {reason}", path.display())]
    Pgm { path: PathBuf, reason: String },
    #[error("{}: malformed JSON: {reason}", path.display())]
    Json { path: PathBuf, reason: String },
    #[error("{}: malformed tensor file: {reason}", path.display())]
    Tensor { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        #[source]
        source: vsor_core::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("missing frames: {}", .0.join(", "))]
    MissingFrames(Vec<String>),
    #[error("{}: no sequences found", .0.display())]
    NoSequences(PathBuf),
    #[error(transparent)]
    Core(#[from] vsor_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for input that failed validation, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Core(vsor_core::Error::Diverged { .. } | vsor_core::Error::NonFinite(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
