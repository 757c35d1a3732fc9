//! Flat `key = value` experiment configuration.
//!
//! Keys use the same spelling as the command-line flags (`budget-mult`,
//! `contexts-k`, ...). Blank lines and `#` comments are ignored.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::HarnessError;
use crate::simulation::WorkerModel;
use crate::strategy::{parse_strategy_list, StrategyKind};

/// Keys accepted in a config file. Keys the experiment itself does not use
/// (`out`, `base`, `betas`) are read by the command layer.
pub const KNOWN_KEYS: &[&str] = &[
    "features",
    "synthetic-tasks",
    "proportions",
    "header",
    "labels",
    "truth",
    "context",
    "contexts-k",
    "workers",
    "model",
    "strategies",
    "n-prime",
    "budget-mult",
    "checkpoints",
    "runs",
    "seed",
    "eta-scale",
    "event-logs",
    "out",
    "base",
    "betas",
];

pub const DEFAULT_STRATEGIES: &str = "lc,ms,id-lc:0.05,id-ms:0.05,random";

/// Ordered key/value pairs; later insertions override earlier ones.
pub type ConfigMap = BTreeMap<String, String>;

pub fn parse_config_text(text: &str) -> Result<ConfigMap, HarnessError> {
    let mut map = ConfigMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(HarnessError::Config(format!(
                "line {}: expected key = value, got {raw:?}",
                lineno + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(HarnessError::Config(format!("line {}: unknown key {key:?}", lineno + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// Feature CSV whose last column is the true label; contexts come from
    /// k-means and workers are simulated.
    Features { path: PathBuf, header: bool },
    /// Generated Gaussian blobs, one per context.
    Synthetic { n_tasks: usize, proportions: Option<Vec<f64>> },
    /// A complete real label matrix with truth and optional context files.
    Labels {
        labels: PathBuf,
        truth: PathBuf,
        context: Option<PathBuf>,
        header: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DatasetSource,
    pub n_contexts: usize,
    pub n_workers: usize,
    pub model: WorkerModel,
    pub strategies: Vec<StrategyKind>,
    pub n_prime: usize,
    /// Total budget in units of `N`.
    pub budget_mult: f64,
    pub checkpoints: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub eta_scale: f64,
    pub event_logs: bool,
}

impl ExperimentConfig {
    pub fn new(source: DatasetSource) -> Self {
        Self {
            source,
            n_contexts: 3,
            n_workers: 30,
            model: WorkerModel::SpammerHammer,
            strategies: parse_strategy_list(DEFAULT_STRATEGIES).expect("valid defaults"),
            n_prime: 1,
            budget_mult: 15.0,
            checkpoints: 30,
            runs: 30,
            base_seed: 0,
            eta_scale: 1.0,
            event_logs: true,
        }
    }

    pub fn from_map(map: &ConfigMap) -> Result<Self, HarnessError> {
        if let Some(unknown) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(HarnessError::Config(format!("unknown key {unknown:?}")));
        }
        let header = parse_opt::<bool>(map, "header")?.unwrap_or(false);
        let source = match (map.get("features"), map.get("synthetic-tasks"), map.get("labels")) {
            (Some(path), None, None) => DatasetSource::Features {
                path: path.into(),
                header,
            },
            (None, Some(_), None) => DatasetSource::Synthetic {
                n_tasks: parse_opt(map, "synthetic-tasks")?.expect("present"),
                proportions: map.get("proportions").map(|p| parse_list(p, "proportions")).transpose()?,
            },
            (None, None, Some(labels)) => DatasetSource::Labels {
                labels: labels.into(),
                truth: map
                    .get("truth")
                    .ok_or_else(|| HarnessError::Config("`labels` requires `truth`".into()))?
                    .into(),
                context: map.get("context").map(PathBuf::from),
                header,
            },
            (None, None, None) => {
                return Err(HarnessError::Config(
                    "no dataset: set one of features, synthetic-tasks or labels".into(),
                ))
            }
            _ => {
                return Err(HarnessError::Config(
                    "features, synthetic-tasks and labels are mutually exclusive".into(),
                ))
            }
        };
        let mut cfg = Self::new(source);
        if let Some(v) = parse_opt(map, "contexts-k")? {
            cfg.n_contexts = v;
        }
        if let DatasetSource::Synthetic { proportions: Some(p), .. } = &cfg.source {
            if map.contains_key("contexts-k") && p.len() != cfg.n_contexts {
                return Err(HarnessError::Config(format!(
                    "{} proportions given for contexts-k = {}",
                    p.len(),
                    cfg.n_contexts
                )));
            }
            cfg.n_contexts = p.len();
        }
        if let Some(v) = parse_opt(map, "workers")? {
            cfg.n_workers = v;
        }
        if let Some(m) = map.get("model") {
            cfg.model = m.parse()?;
        }
        if let Some(s) = map.get("strategies") {
            cfg.strategies = parse_strategy_list(s)?;
        }
        if let Some(v) = parse_opt(map, "n-prime")? {
            cfg.n_prime = v;
        }
        if let Some(v) = parse_opt(map, "budget-mult")? {
            cfg.budget_mult = v;
        }
        if let Some(v) = parse_opt(map, "checkpoints")? {
            cfg.checkpoints = v;
        }
        if let Some(v) = parse_opt(map, "runs")? {
            cfg.runs = v;
        }
        if let Some(v) = parse_opt(map, "seed")? {
            cfg.base_seed = v;
        }
        if let Some(v) = parse_opt(map, "eta-scale")? {
            cfg.eta_scale = v;
        }
        if let Some(v) = parse_opt(map, "event-logs")? {
            cfg.event_logs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that does not depend on the loaded dataset.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.runs == 0 {
            return fail("runs must be at least 1".into());
        }
        if self.checkpoints == 0 {
            return fail("checkpoints must be at least 1".into());
        }
        if self.n_prime == 0 {
            return fail("n-prime must be at least 1".into());
        }
        if self.n_contexts == 0 {
            return fail("contexts-k must be at least 1".into());
        }
        if !(self.budget_mult > 0.0 && self.budget_mult.is_finite()) {
            return fail(format!("budget-mult must be positive, got {}", self.budget_mult));
        }
        if !(self.eta_scale > 0.0 && self.eta_scale.is_finite()) {
            return fail(format!("eta-scale must be positive, got {}", self.eta_scale));
        }
        let mut names: Vec<String> = self.strategies.iter().map(ToString::to_string).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return fail(format!("strategy {} listed twice", w[0]));
        }
        Ok(())
    }

    /// `T = floor(budget_mult * N)`.
    pub fn total_budget(&self, n_tasks: usize) -> usize {
        (self.budget_mult * n_tasks as f64).floor() as usize
    }
}

fn parse_opt<T: std::str::FromStr>(map: &ConfigMap, key: &str) -> Result<Option<T>, HarnessError> {
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| HarnessError::Config(format!("invalid value {v:?} for {key}")))
        })
        .transpose()
}

/// Comma-separated reals.
pub fn parse_list(value: &str, key: &str) -> Result<Vec<f64>, HarnessError> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Config(format!("invalid number {s:?} in {key}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let text = "# benchmark\nsynthetic-tasks = 300\nworkers=30\nmodel = one-coin\nstrategies = lc,random\nruns = 5 # few\nseed = 42\n";
        let cfg = ExperimentConfig::from_map(&parse_config_text(text).unwrap()).unwrap();
        assert_eq!(cfg.source, DatasetSource::Synthetic { n_tasks: 300, proportions: None });
        assert_eq!(cfg.model, WorkerModel::ONE_COIN);
        assert_eq!(cfg.strategies, vec![StrategyKind::LeastConfidence, StrategyKind::Random]);
        assert_eq!((cfg.runs, cfg.base_seed, cfg.checkpoints, cfg.n_prime), (5, 42, 30, 1));
        assert_eq!(cfg.total_budget(300), 4500);
    }

    #[test]
    fn later_values_override() {
        let mut map = parse_config_text("synthetic-tasks = 90\nruns = 3").unwrap();
        map.insert("runs".into(), "7".into());
        assert_eq!(ExperimentConfig::from_map(&map).unwrap().runs, 7);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config_text("bogus = 1").is_err());
        assert!(parse_config_text("no equals sign").is_err());
        let bad = |t: &str| ExperimentConfig::from_map(&parse_config_text(t).unwrap()).is_err();
        assert!(bad("runs = 3"));
        assert!(bad("synthetic-tasks = 90\nruns = 0"));
        assert!(bad("synthetic-tasks = 90\nstrategies = lc,lc"));
        assert!(bad("synthetic-tasks = 90\nfeatures = x.csv"));
        assert!(bad("labels = l.csv"));
        assert!(bad("synthetic-tasks = 90\nproportions = 0.5,0.5\ncontexts-k = 3"));
    }

    #[test]
    fn proportions_set_context_count() {
        let cfg = ExperimentConfig::from_map(
            &parse_config_text("synthetic-tasks = 300\nproportions = 0.7,0.2,0.1").unwrap(),
        )
        .unwrap();
        assert_eq!(cfg.n_contexts, 3);
    }
}
