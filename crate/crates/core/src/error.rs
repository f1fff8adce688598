use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LbflError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("distance matrix is not a metric: {0}")]
    NotMetric(String),

    #[error("dangling reference: {0}")]
    Reference(String),

    #[error("points {0} and {1} are not connected")]
    Unreachable(usize, usize),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("required flow {required} exceeds maximum flow {max_flow}")]
    FlowInfeasible { required: u64, max_flow: u64 },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("instance exceeds oracle cap: {size} > {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("structural error: {0}")]
    Structural(String),

    /// A certified inequality or internal invariant failed; always a bug.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, LbflError>;
