use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input vector {0:?} is outside the promise set")]
    OutsidePromise(Vec<u32>),

    #[error("symbol {value} out of range for {what} (expected < {bound})")]
    OutOfRange { what: &'static str, value: u64, bound: u64 },

    #[error("vector has length {got}, expected {expected}")]
    Arity { expected: usize, got: usize },

    #[error("too large to enumerate: {what} needs {needed} items, limit is {limit}")]
    TooLarge {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("search budget exceeded after {visited} nodes (limit {limit})")]
    BudgetExceeded { visited: u64, limit: u64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown generator id {0:?}")]
    UnknownGenerator(String),

    #[error("inconsistent quantities: {0}")]
    Inconsistent(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("protocol rejected: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn out_of_range(what: &'static str, value: impl Into<u64>, bound: impl Into<u64>) -> Self {
        Error::OutOfRange {
            what,
            value: value.into(),
            bound: bound.into(),
        }
    }
}
