use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: bad file format: {reason}")]
    Format { path: String, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("grid dimensions mismatch: {0}")]
    GridMismatch(String),

    #[error("point ({x:.3}, {y:.3}) outside reference surface extent")]
    OutsideReference { x: f64, y: f64 },

    #[error("degenerate segment at node {node}: length {len:.3e} below tolerance")]
    DegenerateSegment { node: usize, len: f64 },

    #[error("meshing failed: {0}")]
    Meshing(String),

    #[error("solver failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
