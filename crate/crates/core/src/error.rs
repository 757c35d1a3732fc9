use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Violations of domain invariants and operation preconditions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("label out of range: {value} at task {task}, worker {worker}")]
    LabelOutOfRange { task: usize, worker: usize, value: i64 },
    #[error("empty context {0}: every context needs at least one task")]
    EmptyContext(usize),
    #[error("context {context} of task {task} is outside [0, {n_contexts})")]
    ContextOutOfRange { task: usize, context: usize, n_contexts: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("budget too small: exploration needs {exploration} units but the total budget is {total}")]
    BudgetTooSmall { exploration: usize, total: usize },
    #[error("budget exhausted")]
    BudgetExhausted,
    #[error("task {task} was already labeled by worker {worker}")]
    AlreadyLabeled { task: usize, worker: usize },
    #[error("invalid weight {weight} for worker {worker}: weights must be positive and finite")]
    InvalidWeight { worker: usize, weight: f64 },
    #[error("no candidate tasks left")]
    EmptyCandidates,
    #[error("no eligible workers")]
    NoEligibleWorkers,
    #[error("context {context} has {available} tasks, exploration needs {needed}")]
    InsufficientTasks { context: usize, available: usize, needed: usize },
    #[error("at least two workers are required, got {0}")]
    TooFewWorkers(usize),
    #[error("only {distinct} distinct points, cannot form {clusters} clusters")]
    TooFewDistinctPoints { distinct: usize, clusters: usize },
    #[error("label matrix is incomplete (missing label at task {task}, worker {worker}); fill missing entries with a matrix-completion method before loading")]
    IncompleteMatrix { task: usize, worker: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
