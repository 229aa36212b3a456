use std::path::PathBuf;

/// Errors produced by the tuning engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv")]
    Csv(#[from] csv::Error),

    #[error("target column `{0}` not found")]
    MissingTarget(String),

    #[error("no usable rows ({dropped} dropped for missing values)")]
    NoUsableRows { dropped: usize },

    #[error("classification target needs at least 2 distinct labels, found {0}")]
    TooFewLabels(usize),

    #[error("column `{column}`: {reason}")]
    Column { column: String, reason: String },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid partition strategy: {0}")]
    Partition(String),

    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),

    #[error("unknown learner kind `{0}`")]
    UnknownLearner(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("loss: {0}")]
    Loss(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid design: {0}")]
    Design(String),

    #[error("unbalanced error table: {0}")]
    Unbalanced(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("{0}")]
    NoResidualDf(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed json")]
    Json(#[from] serde_json::Error),

    #[error("cannot build thread pool")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
