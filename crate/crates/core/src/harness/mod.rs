//! Experiment orchestration: seeded multi-run simulations, checkpointed
//! accuracy curves, beta sweeps and worker-accuracy histograms.
//!
//! Every run `r` (1-based) uses the seed `base_seed + r`. Worker expertise,
//! simulated labels, policy randomness and checkpoint tie-breaks each draw
//! from their own stream derived from that seed, so different strategies
//! face the same simulated workers in run `r` and the strategy list order
//! has no effect on any curve.

mod commands;
mod config;
mod io;
mod report;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use commands::{histogram_command, simulate_command, sweep_command};
pub use config::{parse_config_text, parse_list, ConfigMap, DatasetSource, ExperimentConfig, DEFAULT_STRATEGIES, KNOWN_KEYS};
pub use io::{load_features, load_label_matrix};
pub use report::{
    format_g6, read_event_log, strategy_file_tag, write_event_log, write_histogram, write_results,
    write_sweep,
};

use crate::bandit::{run, EngineState, Event, MatrixOracle, RunConfig};
use crate::error::Error;
use crate::simulation::{generate_labels, kmeans_contexts, synthetic_features, worker_true_accuracy, WorkerModel, WorkerPool};
use crate::strategy::StrategyKind;
use crate::types::{ContextAssignment, GroundTruth, Label};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Domain(#[from] Error),
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub(crate) fn input(path: &Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Input(format!("{}: {err}", path.display()))
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

const STREAM_EXPERTISE: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_POLICY: u64 = 3;
const STREAM_EVAL: u64 = 4;

/// SplitMix64 of `seed` offset by `stream`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    base_seed.wrapping_add(run as u64)
}

/// Fraction of estimates equal to the truth.
pub fn accuracy(estimates: &[Label], truth: &GroundTruth) -> Result<f64, Error> {
    if estimates.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates for {} truth labels",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Ok(0.0);
    }
    let correct = estimates.iter().zip(truth.labels()).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / estimates.len() as f64)
}

/// Accuracy of the weighted vote over all tasks, exploration tasks
/// included. Ties (including unlabeled tasks) are broken by a generator
/// seeded with `tie_seed`, so evaluating never disturbs the run itself.
pub fn evaluate_checkpoint(state: &EngineState, truth: &GroundTruth, tie_seed: u64) -> Result<f64, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(tie_seed);
    accuracy(&state.estimates(&mut rng), truth)
}

/// `count` budgets evenly spaced from `t1` to `total` inclusive (floored,
/// deduplicated). A single checkpoint sits at `total`.
pub fn checkpoint_budgets(t1: usize, total: usize, count: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![total];
    }
    let span = total - t1;
    let mut out: Vec<usize> = (0..count).map(|i| t1 + i * span / (count - 1)).collect();
    out.dedup();
    out
}

/// Contexts and truth shared by every run, plus the fixed label matrix in
/// real-data mode.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub contexts: ContextAssignment,
    pub truth: GroundTruth,
    pub fixed: Option<MatrixOracle>,
}

impl Dataset {
    pub fn n_tasks(&self) -> usize {
        self.truth.len()
    }
}

pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    match &cfg.source {
        DatasetSource::Features { path, header } => {
            let (features, truth) = load_features(path, *header)?;
            let contexts = kmeans_contexts(&features, cfg.n_contexts, cfg.base_seed)?;
            Ok(Dataset { contexts, truth, fixed: None })
        }
        DatasetSource::Synthetic { n_tasks, proportions } => {
            let equal = vec![1.0; cfg.n_contexts];
            let props = proportions.as_deref().unwrap_or(&equal);
            let (features, truth) = synthetic_features(*n_tasks, props, cfg.base_seed)?;
            let contexts = kmeans_contexts(&features, props.len(), cfg.base_seed)?;
            Ok(Dataset { contexts, truth, fixed: None })
        }
        DatasetSource::Labels { labels, truth, context, header } => {
            let (matrix, contexts, truth) = load_label_matrix(labels, context.as_deref(), truth, *header)?;
            Ok(Dataset {
                contexts,
                truth,
                fixed: Some(MatrixOracle::new(matrix)?),
            })
        }
    }
}

fn n_workers(cfg: &ExperimentConfig, dataset: &Dataset) -> usize {
    dataset
        .fixed
        .as_ref()
        .map_or(cfg.n_workers, |m| m.matrix().n_workers())
}

/// The label source for run `seed`: the fixed matrix, or a freshly
/// simulated population.
pub fn run_oracle(cfg: &ExperimentConfig, dataset: &Dataset, seed: u64) -> Result<MatrixOracle, HarnessError> {
    if let Some(fixed) = &dataset.fixed {
        return Ok(fixed.clone());
    }
    let pool = WorkerPool::sample(
        cfg.n_workers,
        dataset.contexts.n_contexts(),
        cfg.model,
        derive_seed(seed, STREAM_EXPERTISE),
    )?;
    let matrix = generate_labels(&pool, &dataset.truth, &dataset.contexts, derive_seed(seed, STREAM_LABELS))?;
    Ok(MatrixOracle::new(matrix)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub strategy: StrategyKind,
    pub run: usize,
    pub seed: u64,
    /// `(budget, accuracy)` at each checkpoint.
    pub accuracy_at: Vec<(usize, f64)>,
    pub assignment_failure: bool,
    pub unlabeled_count: usize,
    pub budget_spent: usize,
    /// Budget left unused because every adaptive task was fully labeled.
    pub shortfall: usize,
    pub events: Option<Vec<Event>>,
}

/// One seeded run with checkpoint evaluation.
pub fn run_single(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    strategy: StrategyKind,
    run_index: usize,
) -> Result<RunResult, HarnessError> {
    let seed = run_seed(cfg.base_seed, run_index);
    let k = n_workers(cfg, dataset);
    let total = cfg.total_budget(dataset.n_tasks());
    let t1 = dataset.contexts.n_contexts() * k * cfg.n_prime;
    if t1 >= total {
        return Err(Error::BudgetTooSmall { exploration: t1, total }.into());
    }
    let budgets = checkpoint_budgets(t1, total, cfg.checkpoints);
    let oracle = run_oracle(cfg, dataset, seed)?;
    let run_cfg = RunConfig {
        budget: total,
        n_prime: cfg.n_prime,
        eta_scale: cfg.eta_scale,
        verify_scores: false,
    };
    let eval_seed = derive_seed(seed, STREAM_EVAL);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_POLICY));
    let mut accuracy_at = Vec::with_capacity(budgets.len());
    let mut eval_err = None;
    let outcome = run(
        dataset.contexts.clone(),
        k,
        strategy,
        &oracle,
        &run_cfg,
        &mut rng,
        |state| {
            let idx = accuracy_at.len();
            if idx < budgets.len() && state.ledger().spent() == budgets[idx] {
                match evaluate_checkpoint(state, &dataset.truth, derive_seed(eval_seed, idx as u64)) {
                    Ok(acc) => accuracy_at.push((budgets[idx], acc)),
                    Err(e) => eval_err = Some(e),
                }
            }
        },
    )?;
    if let Some(e) = eval_err {
        return Err(e.into());
    }
    // pool emptied early: later checkpoints see the final state
    for (idx, &b) in budgets.iter().enumerate().skip(accuracy_at.len()) {
        let acc = evaluate_checkpoint(&outcome.state, &dataset.truth, derive_seed(eval_seed, idx as u64))?;
        accuracy_at.push((b, acc));
    }
    let unlabeled_count = outcome.state.unlabeled_count();
    let budget_spent = outcome.state.ledger().spent();
    Ok(RunResult {
        strategy,
        run: run_index,
        seed,
        accuracy_at,
        assignment_failure: unlabeled_count > 0,
        unlabeled_count,
        budget_spent,
        shortfall: outcome.shortfall,
        events: cfg.event_logs.then(|| outcome.state.into_events()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub budget: usize,
    /// `None` when every run failed.
    pub mean_accuracy: Option<f64>,
    pub stderr: Option<f64>,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub strategy: StrategyKind,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub summaries: Vec<CurveSummary>,
    /// Sorted by strategy (config order) then run index.
    pub runs: Vec<RunResult>,
}

/// Mean and standard error (`sample sd / sqrt(n)`; 0 for a single value).
pub fn mean_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

/// Aggregates the runs of one strategy. Failed runs are counted and left
/// out of the mean.
pub fn summarize(strategy: StrategyKind, runs: &[&RunResult]) -> CurveSummary {
    let n_failed = runs.iter().filter(|r| r.assignment_failure).count();
    let clean: Vec<&&RunResult> = runs.iter().filter(|r| !r.assignment_failure).collect();
    let n_points = runs.first().map_or(0, |r| r.accuracy_at.len());
    let points = (0..n_points)
        .map(|i| {
            let values: Vec<f64> = clean.iter().map(|r| r.accuracy_at[i].1).collect();
            let stats = mean_stderr(&values);
            CurvePoint {
                budget: runs[0].accuracy_at[i].0,
                mean_accuracy: stats.map(|s| s.0),
                stderr: stats.map(|s| s.1),
                n_failed,
            }
        })
        .collect();
    CurveSummary { strategy, points }
}

/// Runs every strategy `runs` times and aggregates the curves. Runs execute
/// in parallel; results are merged in (strategy, run) order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let dataset = prepare_dataset(cfg)?;
    run_experiment_on(cfg, &dataset)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<ExperimentResult, HarnessError> {
    let jobs: Vec<(usize, usize)> = (0..cfg.strategies.len())
        .flat_map(|s| (1..=cfg.runs).map(move |r| (s, r)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, r)| run_single(cfg, dataset, cfg.strategies[s], r))
        .collect::<Result<Vec<_>, _>>()?;
    let summaries = cfg
        .strategies
        .iter()
        .enumerate()
        .map(|(s, &kind)| {
            let mine: Vec<&RunResult> = runs[s * cfg.runs..(s + 1) * cfg.runs].iter().collect();
            summarize(kind, &mine)
        })
        .collect();
    Ok(ExperimentResult { summaries, runs })
}

/// Which confidence function the density strategies wrap in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepBase {
    Lc,
    Ms,
}

impl SweepBase {
    pub fn with_beta(self, beta: f64) -> Result<StrategyKind, Error> {
        match self {
            SweepBase::Lc => StrategyKind::info_density_lc(beta),
            SweepBase::Ms => StrategyKind::info_density_ms(beta),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepBase::Lc => "lc",
            SweepBase::Ms => "ms",
        }
    }
}

impl std::str::FromStr for SweepBase {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s.trim() {
            "lc" => Ok(SweepBase::Lc),
            "ms" => Ok(SweepBase::Ms),
            other => Err(HarnessError::Config(format!("sweep base must be lc or ms, got {other:?}"))),
        }
    }
}

/// Final-budget accuracy for one beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    /// Mean over runs without assignment failure; `None` when all failed.
    pub mean_accuracy: Option<f64>,
    pub stderr: Option<f64>,
    pub n_failed: usize,
    pub n_runs: usize,
}

impl SweepRow {
    pub fn flagged(&self) -> bool {
        self.n_failed > 0
    }
}

pub fn sweep_beta(cfg: &ExperimentConfig, betas: &[f64], base: SweepBase) -> Result<Vec<SweepRow>, HarnessError> {
    if betas.is_empty() {
        return Err(HarnessError::Config("betas must not be empty".into()));
    }
    let mut sweep_cfg = cfg.clone();
    sweep_cfg.strategies = betas.iter().map(|&b| base.with_beta(b)).collect::<Result<_, _>>()?;
    sweep_cfg.event_logs = false;
    let result = run_experiment(&sweep_cfg)?;
    Ok(betas
        .iter()
        .zip(&result.summaries)
        .map(|(&beta, summary)| {
            let last = summary.points.last().expect("at least one checkpoint");
            SweepRow {
                beta,
                mean_accuracy: last.mean_accuracy,
                stderr: last.stderr,
                n_failed: last.n_failed,
                n_runs: cfg.runs,
            }
        })
        .collect())
}

/// True worker accuracies pooled over runs, for one worker population.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerAccuracies {
    /// Model name, or `real` for a loaded label matrix.
    pub population: String,
    pub accuracies: Vec<f64>,
}

impl WorkerAccuracies {
    pub fn mean(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len() as f64
    }

    /// Proportion of workers per 5-point bin. Bin `i` covers
    /// `(0.05 i, 0.05 (i + 1)]`; zero falls in the first bin.
    pub fn histogram(&self) -> [f64; 20] {
        let mut bins = [0usize; 20];
        for &a in &self.accuracies {
            let idx = ((a * 20.0 - 1e-9).ceil() as isize - 1).clamp(0, 19) as usize;
            bins[idx] += 1;
        }
        let n = self.accuracies.len() as f64;
        bins.map(|c| c as f64 / n)
    }
}

/// Worker accuracies for each model (simulated data), or for the fixed
/// matrix in real-data mode.
pub fn worker_histogram(cfg: &ExperimentConfig, models: &[WorkerModel]) -> Result<Vec<WorkerAccuracies>, HarnessError> {
    let dataset = prepare_dataset(cfg)?;
    if let Some(fixed) = &dataset.fixed {
        return Ok(vec![WorkerAccuracies {
            population: "real".into(),
            accuracies: worker_true_accuracy(fixed.matrix(), &dataset.truth)?,
        }]);
    }
    models
        .iter()
        .map(|&model| {
            let mut model_cfg = cfg.clone();
            model_cfg.model = model;
            let mut accuracies = Vec::with_capacity(cfg.runs * cfg.n_workers);
            for r in 1..=cfg.runs {
                let oracle = run_oracle(&model_cfg, &dataset, run_seed(cfg.base_seed, r))?;
                accuracies.extend(worker_true_accuracy(oracle.matrix(), &dataset.truth)?);
            }
            Ok(WorkerAccuracies {
                population: model.name().into(),
                accuracies,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        use Label::{Negative as N, Positive as P};
        let truth = GroundTruth::new(vec![P, N, P, N]);
        assert_eq!(accuracy(&[P, N, P, N], &truth).unwrap(), 1.0);
        assert_eq!(accuracy(&[N, P, N, P], &truth).unwrap(), 0.0);
        assert_eq!(accuracy(&[P, P, P, P], &truth).unwrap(), 0.5);
        assert!(accuracy(&[P], &truth).is_err());
    }

    #[test]
    fn checkpoints_span_exploration_to_total() {
        assert_eq!(checkpoint_budgets(90, 4500, 30).len(), 30);
        assert_eq!(checkpoint_budgets(90, 4500, 30)[0], 90);
        assert_eq!(*checkpoint_budgets(90, 4500, 30).last().unwrap(), 4500);
        assert_eq!(checkpoint_budgets(10, 15, 3), vec![10, 12, 15]);
        assert_eq!(checkpoint_budgets(10, 12, 5), vec![10, 11, 12]);
        assert_eq!(checkpoint_budgets(10, 15, 1), vec![15]);
    }

    #[test]
    fn stderr_uses_sample_deviation() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        // sd = sqrt(5/3)
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(mean_stderr(&[0.7]), Some((0.7, 0.0)));
        assert_eq!(mean_stderr(&[]), None);
    }

    #[test]
    fn histogram_bins() {
        let w = WorkerAccuracies {
            population: "x".into(),
            accuracies: vec![0.0, 0.62, 0.65, 1.0],
        };
        let h = w.histogram();
        assert_eq!(h[0], 0.25);
        assert_eq!(h[12], 0.5);
        assert_eq!(h[19], 0.25);
    }

    #[test]
    fn derived_seeds_differ_per_stream() {
        let a: Vec<u64> = (1..5).map(|s| derive_seed(7, s)).collect();
        let mut b = a.clone();
        b.dedup();
        assert_eq!(a.len(), b.len());
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1));
    }
}
