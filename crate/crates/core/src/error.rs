use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("input is empty: {0}")]
    EmptyInput(String),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("duplicate or empty column name `{0}`")]
    BadColumnName(String),

    #[error("cannot parse cell at row {row}, column `{column}`: {value:?}")]
    Parse { row: usize, column: String, value: String },

    #[error("non-finite value at row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("singular system: smallest eigenvalue {min_eigenvalue:e} (largest {max_eigenvalue:e})")]
    Singular { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("need more than {needed} observations, got {n}")]
    DegreesOfFreedom { n: usize, needed: usize },

    #[error("family error: {0}")]
    Family(String),

    #[error("IRLS did not converge in {iterations} iterations (score norm {score_norm:e}, last iterate {beta:?})")]
    NonConvergence {
        iterations: usize,
        score_norm: f64,
        beta: Vec<f64>,
    },

    #[error("separation detected after {iterations} iterations: |beta| = {max_abs_beta:.1} exceeds bound")]
    Separation { iterations: usize, max_abs_beta: f64 },

    #[error("{failures} of {replicates} replicates failed (limit 10%): {reasons:?}")]
    ExcessiveFailures {
        failures: usize,
        replicates: usize,
        reasons: Vec<String>,
    },

    #[error("need at least {needed} draws, have {have}")]
    InsufficientDraws { needed: usize, have: usize },

    #[error("index {index} out of range (0..{len})")]
    Index { index: usize, len: usize },

    #[error("all residuals are zero; calibration is vacuous")]
    ZeroScale,

    #[error("fold {fold} leaves {train} training rows; a full-rank fit needs more than {needed}")]
    FoldSize { fold: usize, train: usize, needed: usize },

    #[error("pairwise slopes undefined: all regressor values are equal")]
    ZeroWeight,

    #[error("level must lie strictly between 0 and 1, got {0}")]
    Level(f64),

    #[error("collinear population: second-moment matrix is singular (smallest eigenvalue {0:e})")]
    CollinearPopulation(f64),

    #[error("invalid population: {field}: {message}")]
    Population { field: String, message: String },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn population(field: &str, message: impl Into<String>) -> Self {
        Error::Population {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
