//! Fixtures shared by the criterion benches.

use crowdassign::harness::{derive_seed, run_oracle, DatasetSource, ExperimentConfig};
use crowdassign::{ContextAssignment, MatrixOracle};

/// The desk-scale benchmark instance: `n_tasks` synthetic tasks in three
/// equal contexts, 30 spammer-hammer workers.
pub fn benchmark_instance(n_tasks: usize, seed: u64) -> (ExperimentConfig, ContextAssignment, MatrixOracle) {
    let mut cfg = ExperimentConfig::new(DatasetSource::Synthetic { n_tasks, proportions: None });
    cfg.base_seed = seed;
    let dataset = crowdassign::harness::prepare_dataset(&cfg).expect("synthetic dataset");
    let oracle = run_oracle(&cfg, &dataset, derive_seed(seed, 0)).expect("simulated workers");
    (cfg, dataset.contexts, oracle)
}
