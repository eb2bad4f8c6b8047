use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {what} has {actual} entries, expected {expected}")]
    LengthMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid embedding matrix: {0}")]
    InvalidEmbedding(String),

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: String, row: usize },

    #[error("degenerate axis: centroid difference norm {raw_norm:e} is below 1e-12")]
    DegenerateAxis { raw_norm: f64 },

    #[error("rank-deficient design: columns {columns:?} are collinear with earlier columns")]
    Collinear { columns: Vec<String> },

    #[error("undefined correlation: {0} has zero variance")]
    ZeroVariance(String),

    #[error("undefined {0}: zero denominator")]
    ZeroDenominator(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing Jacobian row for text {0}")]
    MissingJacobianRow(usize),

    #[error("head kind `{0}` cannot be evaluated here")]
    UnsupportedHead(&'static str),

    #[error("missing recall-guard (Cp1) pool in metric block")]
    MissingRecallGuard,

    #[error("covariate `{name}` missing for text ids {ids:?}")]
    MissingCovariate { name: String, ids: Vec<String> },

    #[error("diverging weights: data are perfectly separable and regularization is zero")]
    DivergingWeights,

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("candidate (axis {axis}, eps {epsilon}): {source}")]
    Candidate {
        axis: String,
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("truncated body in {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("duplicate text_id `{text_id}` at line {line}")]
    DuplicateTextId { text_id: String, line: usize },

    #[error("unknown role `{role}` at line {line}")]
    UnknownRole { role: String, line: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn ensure_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
