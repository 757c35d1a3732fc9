//! The end-to-end pipelines behind each CLI subcommand.

use std::path::{Path, PathBuf};

use super::{
    run_experiment, sweep_beta, worker_histogram, write_histogram, write_results, write_sweep, ExperimentConfig,
    HarnessError, SweepBase, SweepRow, WorkerAccuracies,
};
use crate::simulation::WorkerModel;

/// Runs every configured strategy and writes curves, run-level rows and
/// event logs into `out_dir`. Serves both `simulate` and `run`.
pub fn simulate_command(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let result = run_experiment(cfg)?;
    write_results(&result, out_dir)
}

/// Writes `sweep_<base>.csv` into `out_dir`.
pub fn sweep_command(
    cfg: &ExperimentConfig,
    betas: &[f64],
    base: SweepBase,
    out_dir: &Path,
) -> Result<(PathBuf, Vec<SweepRow>), HarnessError> {
    let rows = sweep_beta(cfg, betas, base)?;
    let path = out_dir.join(format!("sweep_{}.csv", base.name()));
    write_sweep(&rows, base, &path)?;
    Ok((path, rows))
}

/// Writes the accuracy histogram CSV to `out`.
pub fn histogram_command(
    cfg: &ExperimentConfig,
    models: &[WorkerModel],
    out: &Path,
) -> Result<Vec<WorkerAccuracies>, HarnessError> {
    let series = worker_histogram(cfg, models)?;
    write_histogram(&series, out)?;
    Ok(series)
}
