use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument `{0}` must be a positive integer")]
    Zero(&'static str),

    #[error("{d} does not divide {n}")]
    NotDivisor { d: u64, n: u64 },

    #[error("torsion levels differ: {left} vs {right}")]
    LevelMismatch { left: u64, right: u64 },

    #[error("point ({u},{v}) has no {k}-th root in level {delta}")]
    NoRoot { u: u64, v: u64, k: u64, delta: u64 },

    #[error("cannot represent level-{from} element at level {to}")]
    IncompatibleLevel { from: u64, to: u64 },

    #[error("invalid tangency profile: {0}")]
    InvalidProfile(String),

    #[error("malformed diagram: {0}")]
    MalformedDiagram(String),

    #[error("json: {0}")]
    Json(String),

    /// Two independent computations disagreed; this is a bug, not a user error.
    #[error("internal consistency failure: {0}")]
    Consistency(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
