use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sketch shape mismatch: {0}")]
    SketchMismatch(String),

    #[error("sketch corrupted: subtraction would make cell {row}:{col} negative")]
    SketchCorrupted { row: usize, col: usize },

    #[error("structural failure: {0}")]
    Structural(String),

    #[error("state {0} has no observations")]
    EmptyState(usize),

    #[error("undo out of order: expected refinement #{expected}, got #{got}")]
    UndoOrder { expected: usize, got: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("alignment mismatch: {0}")]
    Alignment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
