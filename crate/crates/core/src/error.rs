use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum LmptError {
    #[error("degenerate cloud: all points coincide")]
    DegenerateCloud,
    #[error("degenerate mesh: total surface area is zero")]
    DegenerateMesh,
    #[error("insufficient points: requested {requested}, available {available}")]
    InsufficientPoints { requested: usize, available: usize },
    #[error("empty set")]
    EmptySet,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage}: pooling left {points} points, fewer than k = {k}")]
    KTooLarge { stage: usize, k: usize, points: usize },
    #[error("unknown condition {id} (model has {count})")]
    Condition { id: usize, count: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("nothing to evaluate")]
    EmptyEval,
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LmptError> = std::result::Result<T, E>;
