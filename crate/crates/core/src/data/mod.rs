//! Directed binary networks, actor covariates and dyad-level fold splits.

mod covariates;
mod folds;
mod network;

use thiserror::Error;

pub use covariates::{
    load_covariates, ColumnKind, ColumnSchema, CovariateMatrix, CovariateSchema, SchemaKind,
};
pub use folds::{make_folds, mask_fold, FoldAssignment};
pub use network::{load_dense_csv, load_edge_list, Network};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: actor id {id} outside 1..={n_actors}")]
    IdOutOfRange { line: usize, id: i64, n_actors: usize },
    #[error("line {line}: self-loop on actor {id}; networks are irreflexive")]
    SelfLoop { line: usize, id: usize },
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column `{column}`: unknown level `{level}`")]
    UnknownLevel { row: usize, column: String, level: String },
    #[error("row {row}, column `{column}`: {message}")]
    BadValue { row: usize, column: String, message: String },
    #[error("expected {expected} rows (one per actor), found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("column `{0}` has zero variance and cannot be standardized")]
    ZeroVariance(String),
    #[error("column `{0}` is named in the schema but absent from the header")]
    MissingColumn(String),
    #[error("schema line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("invalid covariate matrix: {0}")]
    InvalidCovariates(String),
    #[error("fold count {k} outside 2..={max}")]
    FoldCount { k: usize, max: usize },
    #[error("fold {fold} outside 1..={k}")]
    FoldIndex { fold: usize, k: usize },
    #[error("network has {network} actors but fold assignment has {folds}")]
    SizeMismatch { network: usize, folds: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
