use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid variable spec: {0}")]
    InvalidSpec(String),

    #[error("invalid event tree: {0}")]
    InvalidTree(String),

    #[error("invalid staging: {0}")]
    InvalidStaging(String),

    #[error("depth {depth} cannot be staged: situations have different outgoing label sets")]
    NotStageable { depth: usize },

    #[error("transition probabilities have not been estimated")]
    MissingTheta,

    #[error("invalid transition probabilities: {0}")]
    InvalidTheta(String),

    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("sample is inconsistent with the event tree: {0}")]
    InconsistentSample(String),

    #[error("data contains missing values; use EM or a pseudo-likelihood")]
    MissingValues,

    #[error("empty data set")]
    EmptyData,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("models are defined on different event trees")]
    MismatchedTrees,

    #[error("group {group} has zero probability mass under the current parameters")]
    DegenerateSupport { group: usize },

    #[error("model file schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
