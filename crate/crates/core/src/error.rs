use thiserror::Error;

/// Errors raised by the mechanism, the game models and their solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    /// A value that violates a type invariant, named by its field path.
    #[error("invalid field `{field}`: {constraint}")]
    Schema { field: String, constraint: String },

    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },

    #[error("infeasible selection for user {user}: {reason}")]
    Infeasible { user: usize, reason: String },

    #[error("instance too large: {what} is {size}, cap is {cap}")]
    TooLarge {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn schema(field: impl Into<String>, constraint: impl Into<String>) -> Error {
    Error::Schema {
        field: field.into(),
        constraint: constraint.into(),
    }
}
