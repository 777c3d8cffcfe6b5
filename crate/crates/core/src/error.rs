use thiserror::Error;

/// Errors produced by geometry construction, assembly and solvers.
#[derive(Error, Debug)]
pub enum CoreError {
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),

    #[error("degenerate strut geometry: {0}")]
    DegenerateStrut(String),

    #[error("network is not connected")]
    NotConnected,

    #[error("finite element orders must satisfy n = k + 1 (got k = {k}, n = {n})")]
    InconsistentOrders { k: usize, n: usize },

    #[error("networks are not nested refinements (ratio {ratio}): {detail}")]
    NotNested { ratio: usize, detail: String },

    #[error("singular system: numeric kernel dimension {kernel_dim}")]
    SingularSystem { kernel_dim: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("solver did not reach requested residual: |Kz-F|/|F| = {achieved:e}")]
    ResidualTooLarge { achieved: f64 },

    #[error("rank decision ambiguous: {0}")]
    AmbiguousRank(String),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("network file parse error: {0}")]
    Parse(#[from] serde_json::Error),
}
