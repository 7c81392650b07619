use thiserror::Error;

use crate::types::Violation;

#[derive(Debug, Error)]
pub enum GlopError {
    #[error("validation failed: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("segment size {size} exceeds tour length {len}")]
    SizeSkipped { size: usize, len: usize },

    #[error("degenerate segment: all points coincide")]
    Degenerate,

    #[error("problem too large for {solver}: {n} nodes (cap {cap})")]
    TooLarge { solver: &'static str, n: usize, cap: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GlopError {
    /// Process exit code for the CLI: 2 for validation failures, 3 for
    /// configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            GlopError::Validation(_) | GlopError::Infeasible(_) => 2,
            GlopError::Config(_) | GlopError::Unsupported(_) => 3,
            _ => 1,
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = GlopError> = std::result::Result<T, E>;
