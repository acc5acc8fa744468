use std::path::PathBuf;

use sprite_nn::NnError;
use thiserror::Error;

/// Coarse failure classes; the CLI maps these onto its exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration, descriptor, or arguments.
    Config,
    /// A file, run, or checkpoint that should exist does not.
    Missing,
    /// Anything that went wrong while computing.
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("missing resource: {}", .0.display())]
    Missing(PathBuf),
    #[error("missing files:{}", .0.iter().map(|p| format!("\n  {}", p.display())).collect::<String>())]
    MissingFiles(Vec<PathBuf>),
    /// Present but not decodable as the expected kind of file.
    #[error("cannot read {}: {reason}", path.display())]
    Unreadable { path: PathBuf, reason: String },
    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error at {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("malformed JSON in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("non-finite loss at step {step}; last good checkpoint: {}", checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into()))]
    NonFiniteLoss { step: u64, checkpoint: Option<PathBuf> },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Invalid(_) => ErrorKind::Config,
            Error::Missing(_) | Error::MissingFiles(_) | Error::Unreadable { .. } => ErrorKind::Missing,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ErrorKind::Missing,
            Error::Nn(NnError::Shape { .. } | NnError::Config(_)) => ErrorKind::Config,
            _ => ErrorKind::Runtime,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
