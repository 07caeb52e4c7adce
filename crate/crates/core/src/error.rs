use alloc::string::String;

/// Errors produced by the training core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("edge endpoint {endpoint} out of range for a graph with {node_count} nodes")]
    EndpointOutOfRange { endpoint: usize, node_count: usize },
    #[error("expected {expected} feature rows, found {found}")]
    FeatureRows { expected: usize, found: usize },
    #[error("width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("activation budget exceeded: {required} node activations needed, budget is {budget}")]
    BudgetExceeded { required: usize, budget: usize },
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("backward called without a recorded forward pass")]
    EmptyTape,
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("no table entry for graph {graph} segment {segment}")]
    MissingTableEntry { graph: usize, segment: usize },
    #[error("enumeration needs {outcomes} outcomes, limit is {limit}")]
    EnumerationBudget { outcomes: u128, limit: u128 },
    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),
}

pub type Result<T> = core::result::Result<T, Error>;
