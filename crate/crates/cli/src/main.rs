use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crowdassign::harness::{
    histogram_command, parse_config_text, parse_list, simulate_command, sweep_command, ConfigMap,
    ExperimentConfig, SweepBase,
};
use crowdassign::simulation::WorkerModel;

/// Budget-constrained task assignment experiments.
#[derive(Parser)]
#[command(name = "crowdassign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulated workers on a feature CSV (or generated data): accuracy curves per strategy.
    Simulate(SimulateArgs),
    /// Strategies replayed against a complete real label matrix.
    Run(SimulateArgs),
    /// Final-budget accuracy of a density strategy across beta values.
    SweepBeta(SweepArgs),
    /// True-accuracy histogram of simulated (or real) workers, 5-point bins.
    WorkerHistogram(HistogramArgs),
}

/// Flags shared by every subcommand. Each overrides the config-file key of
/// the same name.
#[derive(Args)]
struct Common {
    /// Flat `key = value` file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature CSV, last column the true label in {-1, +1}.
    #[arg(long)]
    features: Option<String>,
    /// Generate this many tasks instead of reading features.
    #[arg(long)]
    synthetic_tasks: Option<String>,
    /// Relative context sizes of the generated data, e.g. 0.7,0.2,0.1.
    #[arg(long)]
    proportions: Option<String>,
    /// Input CSVs carry a header row.
    #[arg(long)]
    header: bool,
    /// Complete N x K label matrix of -1/+1.
    #[arg(long)]
    labels: Option<String>,
    /// True labels, one per line.
    #[arg(long)]
    truth: Option<String>,
    /// Context id per task, one per line.
    #[arg(long)]
    context: Option<String>,
    #[arg(long)]
    contexts_k: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// spammer-hammer, one-coin or one-coin-malicious.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated: lc, ms, id-lc:<beta>, id-ms:<beta>, random.
    #[arg(long)]
    strategies: Option<String>,
    #[arg(long)]
    n_prime: Option<String>,
    /// Total budget as a multiple of the task count.
    #[arg(long)]
    budget_mult: Option<String>,
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    eta_scale: Option<String>,
    /// Write per-run event logs (true/false).
    #[arg(long)]
    event_logs: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// lc or ms.
    #[arg(long)]
    base: Option<String>,
    /// Comma-separated beta values.
    #[arg(long)]
    betas: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct HistogramArgs {
    #[command(flatten)]
    common: Common,
    /// Output CSV.
    #[arg(long)]
    out: Option<String>,
}

const DEFAULT_BETAS: &str = "0.001,0.005,0.01,0.05,0.1,0.5,1,2";

impl Common {
    /// Config file entries overridden by explicit flags.
    fn merged(&self, extra: &[(&str, &Option<String>)]) -> Result<ConfigMap> {
        let mut map = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                parse_config_text(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => ConfigMap::new(),
        };
        let flags: [(&str, &Option<String>); 17] = [
            ("features", &self.features),
            ("synthetic-tasks", &self.synthetic_tasks),
            ("proportions", &self.proportions),
            ("labels", &self.labels),
            ("truth", &self.truth),
            ("context", &self.context),
            ("contexts-k", &self.contexts_k),
            ("workers", &self.workers),
            ("model", &self.model),
            ("strategies", &self.strategies),
            ("n-prime", &self.n_prime),
            ("budget-mult", &self.budget_mult),
            ("checkpoints", &self.checkpoints),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("eta-scale", &self.eta_scale),
            ("event-logs", &self.event_logs),
        ];
        for (key, value) in flags.iter().chain(extra) {
            if let Some(v) = value {
                map.insert(key.to_string(), v.clone());
            }
        }
        if self.header {
            map.insert("header".into(), "true".into());
        }
        Ok(map)
    }
}

fn experiment(map: &ConfigMap) -> Result<ExperimentConfig> {
    // command-level keys are not part of the experiment itself
    let mut exp = map.clone();
    for key in ["out", "base", "betas"] {
        exp.remove(key);
    }
    Ok(ExperimentConfig::from_map(&exp)?)
}

fn required(map: &ConfigMap, key: &str) -> Result<PathBuf> {
    match map.get(key) {
        Some(v) => Ok(PathBuf::from(v)),
        None => bail!("missing --{key} (flag or config key)"),
    }
}

fn simulate(args: &SimulateArgs, real: bool) -> Result<()> {
    let map = args.common.merged(&[("out", &args.out)])?;
    if real && !map.contains_key("labels") {
        bail!("run needs --labels and --truth; use simulate for feature data");
    }
    if !real && map.contains_key("labels") {
        bail!("simulate takes feature data; use run for a label matrix");
    }
    let out = required(&map, "out")?;
    let cfg = experiment(&map)?;
    let written = simulate_command(&cfg, &out)?;
    eprintln!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let map = args
        .common
        .merged(&[("out", &args.out), ("base", &args.base), ("betas", &args.betas)])?;
    let out = required(&map, "out")?;
    let base: SweepBase = map.get("base").map_or("lc", String::as_str).parse()?;
    let betas = parse_list(map.get("betas").map_or(DEFAULT_BETAS, String::as_str), "betas")?;
    let cfg = experiment(&map)?;
    let (path, rows) = sweep_command(&cfg, &betas, base, &out)?;
    let failed = rows.iter().filter(|r| r.flagged()).count();
    eprintln!("wrote {} ({failed} of {} betas with assignment failures)", path.display(), rows.len());
    Ok(())
}

fn histogram(args: &HistogramArgs) -> Result<()> {
    let map = args.common.merged(&[("out", &args.out)])?;
    let out = required(&map, "out")?;
    // without an explicit model, compare all three populations
    let models = match map.get("model") {
        Some(m) => vec![m.parse::<WorkerModel>()?],
        None => WorkerModel::all().to_vec(),
    };
    let cfg = experiment(&map)?;
    let series = histogram_command(&cfg, &models, &out)?;
    for s in &series {
        eprintln!("{}: mean true accuracy {:.4} over {} workers", s.population, s.mean(), s.accuracies.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args, false),
        Command::Run(args) => simulate(args, true),
        Command::SweepBeta(args) => sweep(args),
        Command::WorkerHistogram(args) => histogram(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
