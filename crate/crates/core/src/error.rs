use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degree-{degree} product needs at least {required} physical samples, grid has {samples}")]
    InsufficientPadding {
        degree: usize,
        samples: usize,
        required: usize,
    },

    #[error("fields live on different grids (N={left_n}, M={left_m} vs N={right_n}, M={right_m})")]
    GridMismatch {
        left_n: usize,
        left_m: usize,
        right_n: usize,
        right_m: usize,
    },

    #[error("non-finite physical sample at index {index}")]
    NonFiniteSample { index: usize },

    #[error("non-finite state at step {step} (t = {time})")]
    NonFiniteState { step: usize, time: f64 },

    #[error("integer overflow evaluating {0}")]
    Overflow(&'static str),

    #[error("{operation} would visit {cost} tuples, budget is {budget}; try K <= {suggestion}")]
    BudgetExceeded {
        operation: &'static str,
        cost: u128,
        budget: u128,
        suggestion: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {needed} snapshots, trajectory has {got}")]
    NotEnoughSnapshots { needed: usize, got: usize },

    #[error("non-positive value {value} at index {index} in fit window")]
    NonPositive { index: usize, value: f64 },
}
