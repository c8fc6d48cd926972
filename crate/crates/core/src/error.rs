use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the toolkit.
///
/// Variants are grouped by class; [`Error::class`] gives a stable name per
/// class that front-ends map to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{quantity} = {value} is outside [{min}, {max}] ({bound} bound violated)")]
    Domain {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
        bound: &'static str,
    },

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("status samples must be non-decreasing: {previous} followed by {next}")]
    Monotonicity { previous: f64, next: f64 },

    #[error("long-term rate is undefined at step 0")]
    UndefinedRate,

    #[error("no regression rows in partition")]
    EmptyPartition,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("identification failed: {0}")]
    IdentificationFailed(String),

    #[error("cannot form {k} clusters from {points} points")]
    Cardinality { k: usize, points: usize },

    #[error("cluster-count selection failed: {0}")]
    Selection(String),

    #[error("member {member} is missing session {session}")]
    IncompleteMember { member: String, session: u8 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: missing header line")]
    MissingHeader(PathBuf),

    #[error("{path}: unsupported schema version {found} (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable error-class name.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Domain { .. } | Error::NonFinite(_) | Error::UndefinedRate => "numeric",
            Error::Config(_) => "config",
            Error::Schema(_) | Error::Ordering(_) | Error::Range(_) | Error::Monotonicity { .. } => "data",
            Error::EmptyPartition | Error::InsufficientData(_) | Error::IdentificationFailed(_) => "identification",
            Error::Cardinality { .. } | Error::Selection(_) => "clustering",
            Error::IncompleteMember { .. } => "cohort",
            Error::Parse { .. } | Error::MissingHeader(_) | Error::Version { .. } => "format",
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => "io",
        }
    }
}
