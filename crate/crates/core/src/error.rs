use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The metric's normalizing quantity is undefined on this sample,
    /// e.g. a constant outcome for R-squared.
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("PPSV is undefined for an empty selection")]
    UndefinedPpsv,

    #[error("coordinate descent did not converge at lambda = {lambda}")]
    Convergence { lambda: f64 },

    #[error("ingestion error at row {row}, column '{column}': {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("fitting failed on fold {fold}: {source}")]
    FoldFit {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidState(_) => "invalid_state",
            Error::DegenerateMetric(_) => "degenerate_metric",
            Error::UndefinedPpsv => "undefined_ppsv",
            Error::Convergence { .. } => "convergence",
            Error::Ingestion { .. } => "ingestion",
            Error::FoldFit { .. } => "fold_fit",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Prefixes the message, keeping the variant where it carries one.
    pub(crate) fn context(self, prefix: impl std::fmt::Display) -> Error {
        match self {
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("{prefix}: {m}")),
            Error::InvalidState(m) => Error::InvalidState(format!("{prefix}: {m}")),
            Error::DegenerateMetric(m) => Error::DegenerateMetric(format!("{prefix}: {m}")),
            Error::Config(m) => Error::Config(format!("{prefix}: {m}")),
            e @ Error::Ingestion { .. } => e,
            e => Error::InvalidArgument(format!("{prefix}: {e}")),
        }
    }
}

pub(crate) fn invalid_arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
