use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A required configuration value is missing or inconsistent.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// An enumeration or search would exceed the configured budget.
    #[error("budget exceeded: {what} needs {needed}, budget is {budget}")]
    Budget { what: &'static str, needed: u128, budget: u128 },
    /// Some other resource cap (oracle size, memory) was hit.
    #[error("resource limit: {0}")]
    Resource(String),
    /// A numerical verification failed.
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for budget and other resource exhaustion.
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::Budget { .. } | Error::Resource(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
