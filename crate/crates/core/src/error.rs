use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("table has no data rows")]
    NoRows,

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}`: {reason}")]
    InvalidColumn { column: String, reason: String },

    #[error("empty feature set")]
    EmptyFeatureSet,

    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("split produced an empty {0} partition")]
    EmptyPartition(&'static str),

    #[error("regression for column `{0}` is singular")]
    SingularRegression(String),

    #[error("non-finite update at iteration {iteration}; try ridge > 0 (separable data)")]
    NonFiniteUpdate { iteration: usize },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("missing value in column `{0}`; impute before predict")]
    MissingInput(String),

    #[error("row length {found} does not match {expected} model features")]
    LengthMismatch { expected: usize, found: usize },

    #[error("constant column")]
    ConstantColumn,

    #[error("{0}")]
    Serde(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn column(column: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidColumn {
            column: column.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration, as opposed
    /// to failures while the computation itself ran.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParameter { .. }
            | Error::UnknownColumn(_)
            | Error::DuplicateColumn(_)
            | Error::RaggedRow { .. }
            | Error::NoRows
            | Error::Serde(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
