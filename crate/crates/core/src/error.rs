use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid DAG: {}", join_violations(.0))]
    InvalidDag(Vec<Violation>),

    #[error("dense table needs {required} entries but capacity is {capacity}")]
    Capacity { required: u128, capacity: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("variable index {index} out of range for {n} variables")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("index sets overlap at x{}", .0 + 1)]
    OverlappingSets(usize),

    #[error("joint distribution is not strictly positive; Markov parents are not unique")]
    NotStrictlyPositive,

    /// A marginal query exceeded the provider's tuple budget.
    #[error("requested a {requested}-tuple marginal but the provider answers at most {max}")]
    TupleSizeExceeded { requested: usize, max: usize },

    /// No `m`-subset of the predecessors of `node` passed the independence battery.
    #[error("model violation at x{}: no {m}-subset of its predecessors renders it independent", .node + 1)]
    ModelViolation { node: usize, m: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("sample-size search exceeded the cap of {0}")]
    SearchCap(u64),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
