use thiserror::Error;

/// Errors raised by the manipulator core.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain the operation is defined on.
    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },

    /// A configuration value violated one of its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
