//! Budget-constrained task assignment for heterogeneous crowdsourcing.
//!
//! Workers are arms of a per-context exponential-weights bandit; which task
//! to label next is decided by a pluggable [`StrategyKind`]: least
//! confidence, margin sampling, their information-density variants, or a
//! uniform random pick.
//!
//! ```
//! use crowdassign::{run, ContextAssignment, Label, RunConfig, StrategyKind};
//! use rand::SeedableRng;
//!
//! let contexts = ContextAssignment::new(2, (0..20).map(|t| t % 2).collect()).unwrap();
//! // worker 0 always answers +1, the others disagree on odd tasks
//! let oracle = |task: usize, worker: usize| {
//!     if worker == 0 || task % 2 == 0 { Label::Positive } else { Label::Negative }
//! };
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let out = run(contexts, 4, StrategyKind::LeastConfidence, &oracle, &RunConfig::new(60), &mut rng, |_| {})
//!     .unwrap();
//! assert_eq!(out.state.ledger().spent(), 60);
//! ```

pub mod aggregation;
pub mod bandit;
mod error;
pub mod harness;
pub mod simulation;
pub mod strategy;
pub mod types;

pub use aggregation::{confidence_lc, confidence_ms, majority_vote, task_scores, weighted_vote, TaskScores};
pub use bandit::{
    compute_weights, learning_rate, loss_update, pure_exploration, replay_losses, run, select_worker,
    EngineState, Event, LabelOracle, MatrixOracle, Phase, RunConfig, RunOutcome, StepRecord, WorkerDraw,
};
pub use error::{Error, Result};
pub use simulation::{FeatureTable, WorkerModel, WorkerPool};
pub use strategy::{id_score, select_task, StrategyKind};
pub use types::{validate_instance, BudgetLedger, ContextAssignment, GroundTruth, Label, LabelMatrix, LossTable};
