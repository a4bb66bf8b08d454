use thiserror::Error;

/// Errors raised by the link model.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violates its domain constraint.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },

    /// The configuration text is not valid JSON for the parameter schema.
    #[error("malformed configuration: {0}")]
    Parse(#[from] serde_json::Error),

    /// Relay distances do not form a valid triple-hop placement.
    #[error("invalid geometry: {0}")]
    Geometry(String),

    /// A formula hit a singular or non-finite value.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Invalid {
        field,
        reason: reason.into(),
    }
}
