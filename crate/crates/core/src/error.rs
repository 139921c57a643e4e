use thiserror::Error;

/// Errors produced anywhere in the codec.
///
/// The command line front end maps each variant onto its own exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("bad format: {0}")]
    Format(String),

    #[error("corrupt stream: {0}")]
    Corruption(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }
}
