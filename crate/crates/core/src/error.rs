use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("expected exactly two classes, found {found}: {classes:?}")]
    ClassCount { found: usize, classes: Vec<String> },

    #[error("no usable rows left after dropping {dropped} rows with missing values")]
    NoRows { dropped: usize },

    #[error("cannot split {n} objects into {labeled} labeled and {unlabeled} unlabeled with a non-empty remainder")]
    SplitTooLarge {
        n: usize,
        labeled: usize,
        unlabeled: usize,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
