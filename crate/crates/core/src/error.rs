use std::path::PathBuf;

use crate::series::Month;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("value out of range [0,100] at row {row}: {value}")]
    Range { row: usize, value: f64 },

    #[error("duplicate month {0}")]
    Duplicate(Month),

    #[error("fetch failed after {attempts} attempt(s): {message}")]
    Fetch { attempts: usize, message: String },

    #[error("endpoint throttled the request (HTTP {status})")]
    Throttled { status: u16 },

    #[error("invalid span: {0}")]
    InvalidSpan(String),

    #[error("cannot assemble a panel from zero series")]
    EmptyPanel,

    #[error("degenerate series{}: {reason}", name.as_ref().map(|n| format!(" '{n}'")).unwrap_or_default())]
    DegenerateSeries { name: Option<String>, reason: String },

    #[error("domain error at index {0}: value must be positive")]
    Domain(usize),

    #[error("length error: {0}")]
    Length(String),

    #[error("column '{0}' has no observations")]
    EmptyColumn(String),

    #[error("insufficient overlap: {months} month(s), need at least {required}")]
    InsufficientOverlap { months: usize, required: usize },

    #[error("rank error: {0}")]
    Rank(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    Singular { columns: Vec<String> },

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("invalid fold plan: {0}")]
    Plan(String),

    #[error("grid search failed: every grid point failed to train")]
    SearchFailed,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// True for errors caused by bad configuration or usage rather than data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Grid(_) | Error::Plan(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
