use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("wavefield became non-finite at step {step}")]
    Instability { step: usize },
    #[error("dataset integrity: {0}")]
    Integrity(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] faultsketch_core::Error),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Instability { .. } => "instability",
            Error::Integrity(_) => "integrity",
            Error::Manifest(_) => "format",
            Error::Io(_) => "io",
            Error::Core(e) => e.category(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
