use thiserror::Error;

/// Errors produced by model construction, fitting, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A dwelling between two change points contains no frames. Proposals
    /// creating such configurations must be rejected by the caller.
    #[error("dwelling {index} between {lo} and {hi} contains no frames")]
    EmptyDwelling { index: usize, lo: f64, hi: f64 },

    /// Two change-point locations coincide, which makes the location prior
    /// degenerate.
    #[error("degenerate change-point configuration: duplicate location at {0}")]
    DegenerateLocations(f64),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("total pooling weight is zero")]
    ZeroPoolWeight,

    #[error("time {0} lies outside the proposal grid support")]
    OutsideGrid(f64),

    #[error("{path}:{line}:{col}: {msg}")]
    Parse {
        path: String,
        line: u64,
        col: u64,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
