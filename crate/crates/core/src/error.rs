use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: rating {rating} outside scale [{min}, {max}]")]
    OutOfScale { line: u64, rating: f64, min: f64, max: f64 },

    #[error("no ratings to build a matrix from")]
    EmptyInput,

    #[error("duplicate rating for user {user:?}, item {item:?}")]
    DuplicatePair { user: String, item: String },

    #[error("value {value} outside {domain}")]
    Range { value: f64, domain: String },

    #[error("cannot compute a mean fill: the matrix has no observed entries")]
    NoObservations,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index ({user}, {item}) out of range for a {n_users}x{n_items} model")]
    IndexOutOfRange { user: usize, item: usize, n_users: usize, n_items: usize },

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("unknown user {0:?}")]
    UnknownUser(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
