use thiserror::Error;

pub type Result<T> = std::result::Result<T, RidgeError>;

#[derive(Debug, Error)]
pub enum RidgeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid penalty: {0}")]
    Penalty(String),

    #[error("unpenalized block is rank deficient; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("linear system is numerically singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid response: {0}")]
    Response(String),

    #[error("fit has not converged: {0}")]
    NotConverged(String),

    #[error("iterations diverged: max |eta| = {0:.3e}")]
    Diverged(f64),

    #[error("block {0} carries no variation")]
    ConstantBlock(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("cross-check failed: {0}")]
    CrossCheck(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl RidgeError {
    /// Numerical failures as opposed to bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            RidgeError::Singular { .. }
                | RidgeError::NotConverged(_)
                | RidgeError::Diverged(_)
                | RidgeError::Optimization(_)
                | RidgeError::CrossCheck(_)
        )
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            RidgeError::Dimension(_) => "dimension",
            RidgeError::Penalty(_) => "penalty",
            RidgeError::RankDeficient { .. } => "rank_deficient",
            RidgeError::Singular { .. } => "singular",
            RidgeError::IndexOutOfRange { .. } => "index_out_of_range",
            RidgeError::Response(_) => "response",
            RidgeError::NotConverged(_) => "not_converged",
            RidgeError::Diverged(_) => "diverged",
            RidgeError::ConstantBlock(_) => "constant_block",
            RidgeError::Unsupported(_) => "unsupported",
            RidgeError::Config(_) => "config",
            RidgeError::Optimization(_) => "optimization",
            RidgeError::CrossCheck(_) => "cross_check",
            RidgeError::Io { .. } => "io",
            RidgeError::Parse(_) => "parse",
        }
    }
}
