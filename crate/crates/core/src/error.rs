use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column '{column}': {reason}")]
    BadCell {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        reason: String,
    },

    #[error("target column '{0}' not found")]
    MissingTarget(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("leaf regions do not form a partition: probabilities sum to {sum}")]
    NotAPartition { sum: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("lambda search failed: objective is non-finite at every grid point")]
    SearchFailed,

    #[error("model file version {found} is not supported (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed model file: {0}")]
    Malformed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
