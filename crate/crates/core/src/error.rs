use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A required column is absent or the header is malformed.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell could not be parsed. `row` is 1-based and counts data rows only.
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// Input parsed but violates a data invariant.
    #[error("validation error{}: {message}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Validation { row: Option<usize>, message: String },

    /// The restriction time lies beyond the support of (a subsample of) the data.
    #[error("tau = {tau} is beyond the data support{}; largest valid tau is {max_tau}", context_suffix(.context))]
    TauSupport {
        tau: f64,
        max_tau: f64,
        context: Option<String>,
    },

    /// Generic numerical-domain violation (empty input, bad parameters).
    #[error("domain error: {0}")]
    Domain(String),

    /// Design matrix is not of full column rank.
    #[error("rank-deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    /// A model fit or estimator failed.
    #[error("estimation failure: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn context_suffix(ctx: &Option<String>) -> String {
    match ctx {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn validation(row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Validation {
            row,
            message: message.into(),
        }
    }

    /// Attach context (arm, subject) to a τ-support error; other variants pass through.
    pub fn with_tau_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::TauSupport { tau, max_tau, .. } => Error::TauSupport {
                tau,
                max_tau,
                context: Some(ctx.into()),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
