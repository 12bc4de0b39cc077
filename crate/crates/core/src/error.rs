use thiserror::Error;

/// Errors raised across the crate.
///
/// Each variant maps onto one CLI exit class: configuration problems exit 2,
/// numerical failures exit 3 and I/O failures exit 4.
#[derive(Debug, Error)]
pub enum ScaleError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure in {context}: achieved residual {residual:e}")]
    NumericalFailure { context: String, residual: f64 },

    #[error("ill-conditioned triangular system: |diag[{index}]| = {diag:e}")]
    IllConditioned { index: usize, diag: f64 },

    #[error("degenerate estimate: {what} = {value}")]
    DegenerateEstimate { what: String, value: f64 },

    #[error("grid too coarse: mass deficit {deficit:e}")]
    GridTooCoarse { deficit: f64 },

    #[error("replication {replication} failed: {message}")]
    WorkerFailure { replication: u64, message: String },

    #[error("invalid sampling scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ScaleError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScaleError::Config(_) | ScaleError::InvalidScheme(_) | ScaleError::Json(_) => 2,
            ScaleError::Domain(_)
            | ScaleError::NumericalFailure { .. }
            | ScaleError::IllConditioned { .. }
            | ScaleError::DegenerateEstimate { .. }
            | ScaleError::GridTooCoarse { .. }
            | ScaleError::WorkerFailure { .. } => 3,
            ScaleError::Io(_) | ScaleError::Csv(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, ScaleError>;
