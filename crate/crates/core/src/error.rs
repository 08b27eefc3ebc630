use thiserror::Error;

/// Errors raised by kernel assembly, sketching and KRR training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate sketch: {0}")]
    DegenerateSketch(String),
    #[error("model format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Input(_) => "input",
            Error::Parameter(_) => "parameter",
            Error::Resource(_) => "resource",
            Error::Numerical(_) => "numerical",
            Error::DegenerateSketch(_) => "degenerate-sketch",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
