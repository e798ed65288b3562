use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or kernel received parameters outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("input contains no rows")]
    EmptyInput,

    #[error("groups with no observations: {}", .0.join(", "))]
    EmptyGroups(Vec<String>),

    #[error("empty (group, second-cluster) cells: {}", .0.join(", "))]
    EmptyCells(Vec<String>),

    #[error("degenerate variance in group `{group}`: {reason}")]
    DegenerateVariance { group: String, reason: String },

    #[error("rank-deficient design in {}: covariate is constant", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("sample variance of the group variances is zero; use the common-variance model instead")]
    ZeroVarianceOfVariances,

    #[error("parameter `{parameter}` left its domain at iteration {iteration} (value {value})")]
    OutOfDomain {
        parameter: String,
        iteration: usize,
        value: f64,
    },

    #[error("log-target is -inf at the current state of `{0}`")]
    InvalidState(String),

    #[error("every grid point has zero target density on [{lo}, {hi}]")]
    EmptyGrid { lo: f64, hi: f64 },

    #[error("chains did not converge: {}", .0.join("; "))]
    NotConverged(Vec<String>),

    #[error("log-likelihood is -inf for observation {observation} at draw {draw}")]
    ImpossibleObservation { observation: usize, draw: usize },

    #[error("reports are not comparable: {0}")]
    Incomparable(String),

    #[error("missing parameter `{0}` in generator spec")]
    MissingParameter(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
