use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the samplers, oracles and the experiment harness.
#[derive(Debug, Error)]
pub enum RclError {
    #[error("{what}: requested {requested} entries exceeds the cap of {cap}")]
    BudgetExceeded {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("endpoint {endpoint:?} is unreachable in {steps} steps")]
    UnreachableEndpoint { endpoint: Vec<i64>, steps: usize },

    #[error("dimension {d} unsupported: {reason}")]
    UnsupportedDimension { d: usize, reason: &'static str },

    #[error("site {site:?} lies outside the disorder window of radius {radius}")]
    FieldCoverage { site: Vec<i64>, radius: i64 },

    #[error("coordinate overflow: walk left the packable range |x| < {limit}")]
    CoordinateOverflow { limit: i64 },

    #[error("points must be distinct and differ from the origin")]
    CoincidentPoints,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record: {0}")]
    Record(String),
}

impl RclError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        RclError::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = RclError> = std::result::Result<T, E>;
