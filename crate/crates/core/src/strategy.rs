//! Task-selection policies.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::aggregation::{confidence_lc, confidence_ms, TaskScores};
use crate::error::{Error, Result};
use crate::types::ContextAssignment;

/// Default density exponent for the information-density strategies.
pub const DEFAULT_BETA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyKind {
    LeastConfidence,
    MarginSampling,
    InfoDensityLc { beta: f64 },
    InfoDensityMs { beta: f64 },
    Random,
}

impl StrategyKind {
    pub fn info_density_lc(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self::InfoDensityLc { beta })
    }

    pub fn info_density_ms(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self::InfoDensityMs { beta })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "beta must be finite and non-negative, got {beta}"
        )))
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::LeastConfidence => f.write_str("lc"),
            StrategyKind::MarginSampling => f.write_str("ms"),
            StrategyKind::InfoDensityLc { beta } => write!(f, "id-lc:{beta}"),
            StrategyKind::InfoDensityMs { beta } => write!(f, "id-ms:{beta}"),
            StrategyKind::Random => f.write_str("random"),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse_beta = |b: &str| {
            b.parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("invalid beta {b:?} in strategy {s:?}")))
        };
        match s {
            "lc" => Ok(Self::LeastConfidence),
            "ms" => Ok(Self::MarginSampling),
            "random" => Ok(Self::Random),
            "id-lc" => Ok(Self::InfoDensityLc { beta: DEFAULT_BETA }),
            "id-ms" => Ok(Self::InfoDensityMs { beta: DEFAULT_BETA }),
            _ => {
                if let Some(b) = s.strip_prefix("id-lc:") {
                    Self::info_density_lc(parse_beta(b)?)
                } else if let Some(b) = s.strip_prefix("id-ms:") {
                    Self::info_density_ms(parse_beta(b)?)
                } else {
                    Err(Error::InvalidParameter(format!(
                        "unknown strategy {s:?} (expected lc, ms, id-lc:<beta>, id-ms:<beta> or random)"
                    )))
                }
            }
        }
    }
}

/// Parses a comma-separated strategy list such as `lc,ms,id-lc:0.05`.
pub fn parse_strategy_list(list: &str) -> Result<Vec<StrategyKind>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// `(1 - confidence) * (context_count / total_tasks)^beta`.
pub fn id_score(confidence: f64, context_count: usize, total_tasks: usize, beta: f64) -> f64 {
    (1.0 - confidence) * density(context_count, total_tasks, beta)
}

fn density(context_count: usize, total_tasks: usize, beta: f64) -> f64 {
    if beta == 0.0 {
        1.0
    } else {
        (context_count as f64 / total_tasks as f64).powf(beta)
    }
}

/// Picks the next task among `candidates` (ascending task ids).
///
/// `scores_by_task` is indexed by task id. Confidence-based strategies break
/// ties by smallest task id. The density strategies break exact score ties
/// by lower confidence first, so `beta = 0` reproduces the plain strategy
/// decision for decision.
pub fn select_task<R: Rng + ?Sized>(
    kind: StrategyKind,
    candidates: &[usize],
    scores_by_task: &[TaskScores],
    contexts: &ContextAssignment,
    rng: &mut R,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let n = contexts.n_tasks();
    let chosen = match kind {
        StrategyKind::Random => candidates[rng.gen_range(0..candidates.len())],
        StrategyKind::LeastConfidence => argmin(candidates, |t| confidence_lc(scores_by_task[t])),
        StrategyKind::MarginSampling => argmin(candidates, |t| confidence_ms(scores_by_task[t])),
        StrategyKind::InfoDensityLc { beta } => {
            let dens = densities(contexts, n, beta);
            argmax_density(candidates, |t| {
                (confidence_lc(scores_by_task[t]), dens[contexts.context_of(t)])
            })
        }
        StrategyKind::InfoDensityMs { beta } => {
            let dens = densities(contexts, n, beta);
            argmax_density(candidates, |t| {
                (confidence_ms(scores_by_task[t]), dens[contexts.context_of(t)])
            })
        }
    };
    Ok(chosen)
}

fn densities(contexts: &ContextAssignment, n: usize, beta: f64) -> Vec<f64> {
    (0..contexts.n_contexts())
        .map(|s| density(contexts.count(s), n, beta))
        .collect()
}

fn argmin(candidates: &[usize], confidence: impl Fn(usize) -> f64) -> usize {
    let mut best = candidates[0];
    let mut best_conf = confidence(best);
    for &t in &candidates[1..] {
        let c = confidence(t);
        if c < best_conf {
            best = t;
            best_conf = c;
        }
    }
    best
}

fn argmax_density(candidates: &[usize], conf_and_density: impl Fn(usize) -> (f64, f64)) -> usize {
    let key = |t: usize| {
        let (c, d) = conf_and_density(t);
        ((1.0 - c) * d, c)
    };
    let mut best = candidates[0];
    let mut best_key = key(best);
    for &t in &candidates[1..] {
        let k = key(t);
        let better = match k.0.partial_cmp(&best_key.0) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Equal) => k.1 < best_key.1,
            _ => false,
        };
        if better {
            best = t;
            best_key = k;
        }
    }
    best
}
