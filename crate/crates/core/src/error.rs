use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("constraint index {index} out of range (m = {count})")]
    ConstraintIndex { index: usize, count: usize },
    #[error("step {step} out of range (horizon {horizon})")]
    StepOutOfRange { step: usize, horizon: usize },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("observation does not match the approximator: {0}")]
    ObservationMismatch(String),
    #[error("insufficient data: no batch records at step {step}")]
    InsufficientData { step: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("enumeration budget exceeded: {required} evaluations requested, budget {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
