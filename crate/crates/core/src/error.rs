use thiserror::Error;

/// Errors raised by the analysis primitives.
#[derive(Debug, Error)]
pub enum Error {
    #[error("projection domain error: {0}")]
    Domain(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{count} point(s) lie outside the window")]
    OutsideWindow { count: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("design matrix is rank deficient; collinear column(s): {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
