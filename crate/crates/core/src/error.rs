use thiserror::Error;

/// Errors surfaced by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient length: {0}")]
    Length(String),

    #[error("covariance matrix is not positive definite at parameters {params:?}")]
    NotPositiveDefinite { params: Vec<f64> },

    #[error("design matrix is rank deficient; dependent columns: {columns:?}")]
    Singular { columns: Vec<String> },

    #[error("numerical inconsistency: {0}")]
    Numerical(String),

    #[error("metric not applicable: {0}")]
    MetricNotApplicable(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error JSON and FFI status codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Dimension(_) => "dimension",
            Error::Length(_) => "length",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::Singular { .. } => "singular",
            Error::Numerical(_) => "numerical",
            Error::MetricNotApplicable(_) => "metric_not_applicable",
            Error::Input(_) => "input",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
