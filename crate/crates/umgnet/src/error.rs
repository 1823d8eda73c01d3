use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced to the operator as `ERROR <kind>: <message>`.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Ingest(String),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] umgnet_core::Error),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        use umgnet_core::Error as E;
        match self {
            AppError::Config(_) => "config",
            AppError::Io { .. } => "io",
            AppError::Ingest(_) => "ingest",
            AppError::Format(_) => "format",
            AppError::Core(e) => match e {
                E::Shape { .. } => "shape",
                E::Parameter(_) => "parameter",
                E::Config(_) => "config",
                E::Dataset(_) => "dataset",
                E::NoTrainingData(_) => "no-training-data",
                E::UndefinedAte { .. } => "undefined-ate",
                E::Numerical(_) => "numerical",
            },
        }
    }
}
