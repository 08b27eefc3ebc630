use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Core(#[from] faultsketch_core::Error),
    #[error(transparent)]
    Seismic(#[from] faultsketch_seismic::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Parameter(_) => "parameter",
            Error::Core(e) => e.category(),
            Error::Seismic(e) => e.category(),
            Error::Json(_) | Error::Csv(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
