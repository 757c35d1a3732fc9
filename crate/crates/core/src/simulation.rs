//! Synthetic instances: k-means contexts from feature data and the
//! heterogeneous worker models that back a simulated [`LabelOracle`].
//!
//! [`LabelOracle`]: crate::bandit::LabelOracle

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{ContextAssignment, GroundTruth, Label, LabelMatrix};

const KMEANS_MAX_ITER: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

/// Row-major `n_tasks x n_features` table of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    n_features: usize,
    values: Vec<f64>,
}

impl FeatureTable {
    pub fn new(n_tasks: usize, n_features: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_tasks * n_features {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not fill {n_tasks}x{n_features}",
                values.len()
            )));
        }
        if n_features == 0 {
            return Err(Error::InvalidParameter("at least one feature column is required".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite feature at row {}, column {}",
                i / n_features,
                i % n_features
            )));
        }
        Ok(Self { n_features, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged feature rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n_tasks(&self) -> usize {
        self.values.len() / self.n_features
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }
}

fn standardize(features: &FeatureTable) -> Vec<f64> {
    let n = features.n_tasks();
    let d = features.n_features();
    let mut out = features.values.clone();
    for c in 0..d {
        let mean = (0..n).map(|i| out[i * d + c]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (out[i * d + c] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            out[i * d + c] = (out[i * d + c] - mean) / sd;
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_rows(features: &FeatureTable) -> usize {
    (0..features.n_tasks())
        .map(|i| features.row(i).iter().map(|v| v.to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

/// Clusters tasks into `s` contexts: z-scored features, k-means++ seeding,
/// then Lloyd iterations until no centroid moves more than `1e-6` (at most
/// 100 rounds). Empty clusters take the point farthest from its centroid.
pub fn kmeans_contexts(features: &FeatureTable, s: usize, seed: u64) -> Result<ContextAssignment> {
    let n = features.n_tasks();
    if s == 0 {
        return Err(Error::InvalidParameter("need at least one cluster".into()));
    }
    if s == 1 {
        return ContextAssignment::homogeneous(n);
    }
    let distinct = distinct_rows(features);
    if distinct < s {
        return Err(Error::TooFewDistinctPoints { distinct, clusters: s });
    }
    let d = features.n_features();
    let data = standardize(features);
    let point = |i: usize| &data[i * d..(i + 1) * d];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centroids: Vec<f64> = Vec::with_capacity(s * d);
    centroids.extend_from_slice(point(rng.gen_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(point(i), &centroids[..d])).collect();
    for _ in 1..s {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &dist) in nearest.iter().enumerate() {
                acc += dist;
                if target < acc && dist > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // standardisation can merge points that were distinct
            return Err(Error::TooFewDistinctPoints { distinct, clusters: s });
        };
        let c = point(next).to_vec();
        for (i, slot) in nearest.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(point(i), &c));
        }
        centroids.extend(c);
    }

    let mut assign = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITER {
        for (i, a) in assign.iter_mut().enumerate() {
            *a = (0..s)
                .min_by(|&x, &y| {
                    sq_dist(point(i), &centroids[x * d..(x + 1) * d])
                        .total_cmp(&sq_dist(point(i), &centroids[y * d..(y + 1) * d]))
                })
                .expect("s >= 1");
        }
        repair_empty(&mut assign, &centroids, s, d, &point);

        let mut sums = vec![0.0; s * d];
        let mut counts = vec![0usize; s];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for (acc, v) in sums[c * d..(c + 1) * d].iter_mut().zip(point(i)) {
                *acc += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..s {
            let updated: Vec<f64> = sums[c * d..(c + 1) * d]
                .iter()
                .map(|v| v / counts[c] as f64)
                .collect();
            shift = shift.max(sq_dist(&updated, &centroids[c * d..(c + 1) * d]).sqrt());
            centroids[c * d..(c + 1) * d].copy_from_slice(&updated);
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    ContextAssignment::new(s, assign)
}

fn repair_empty<'a>(
    assign: &mut [usize],
    centroids: &[f64],
    s: usize,
    d: usize,
    point: &impl Fn(usize) -> &'a [f64],
) {
    loop {
        let mut counts = vec![0usize; s];
        for &c in assign.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let far = (0..assign.len())
            .filter(|&i| counts[assign[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(point(a), &centroids[assign[a] * d..(assign[a] + 1) * d]);
                let db = sq_dist(point(b), &centroids[assign[b] * d..(assign[b] + 1) * d]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("n >= s guarantees a donor cluster");
        assign[far] = empty;
    }
}

/// Per-context accuracy parameters of the simulated worker population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkerModel {
    /// Perfect on the expert context, a fair coin elsewhere.
    SpammerHammer,
    OneCoin { good: f64, bad: f64 },
    OneCoinMalicious { good: f64, malicious: f64, normal: f64 },
}

impl WorkerModel {
    pub const ONE_COIN: WorkerModel = WorkerModel::OneCoin { good: 0.9, bad: 0.6 };
    pub const ONE_COIN_MALICIOUS: WorkerModel =
        WorkerModel::OneCoinMalicious { good: 0.9, malicious: 0.3, normal: 0.6 };

    pub fn all() -> [WorkerModel; 3] {
        [WorkerModel::SpammerHammer, Self::ONE_COIN, Self::ONE_COIN_MALICIOUS]
    }

    pub fn name(&self) -> &'static str {
        match self {
            WorkerModel::SpammerHammer => "spammer-hammer",
            WorkerModel::OneCoin { .. } => "one-coin",
            WorkerModel::OneCoinMalicious { .. } => "one-coin-malicious",
        }
    }

    fn validate(&self) -> Result<()> {
        let accs: &[f64] = match self {
            WorkerModel::SpammerHammer => &[],
            WorkerModel::OneCoin { good, bad } => &[*good, *bad],
            WorkerModel::OneCoinMalicious { good, malicious, normal } => &[*good, *malicious, *normal],
        };
        if accs.iter().all(|a| (0.0..=1.0).contains(a)) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("accuracies of {self} must lie in [0, 1]")))
        }
    }

    /// Probability that `expertise` answers a task of `context` correctly.
    pub fn accuracy(&self, expertise: &Expertise, context: usize) -> f64 {
        match *self {
            WorkerModel::SpammerHammer => {
                if context == expertise.good {
                    1.0
                } else {
                    0.5
                }
            }
            WorkerModel::OneCoin { good, bad } => {
                if context == expertise.good {
                    good
                } else {
                    bad
                }
            }
            WorkerModel::OneCoinMalicious { good, malicious, normal } => {
                if context == expertise.good {
                    good
                } else if Some(context) == expertise.bad {
                    malicious
                } else {
                    normal
                }
            }
        }
    }
}

impl fmt::Display for WorkerModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkerModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "spammer-hammer" => Ok(WorkerModel::SpammerHammer),
            "one-coin" => Ok(Self::ONE_COIN),
            "one-coin-malicious" => Ok(Self::ONE_COIN_MALICIOUS),
            other => Err(Error::InvalidParameter(format!(
                "unknown worker model {other:?} (expected spammer-hammer, one-coin or one-coin-malicious)"
            ))),
        }
    }
}

/// Which context a worker is good at and, for the malicious model, which it
/// is bad at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expertise {
    pub good: usize,
    pub bad: Option<usize>,
}

/// Draws each worker's expert context. The first `min(k, s)` workers of a
/// random permutation cover every context once; the rest are uniform.
pub fn assign_expertise(k: usize, s: usize, model: WorkerModel, seed: u64) -> Result<Vec<Expertise>> {
    if k == 0 || s == 0 {
        return Err(Error::InvalidParameter("need at least one worker and one context".into()));
    }
    let malicious = matches!(model, WorkerModel::OneCoinMalicious { .. });
    if malicious && s < 2 {
        return Err(Error::InvalidParameter(
            "the malicious model needs at least two contexts".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    let mut good = vec![0usize; k];
    for (rank, &worker) in order.iter().enumerate() {
        good[worker] = if rank < s { rank } else { rng.gen_range(0..s) };
    }
    Ok(good
        .into_iter()
        .map(|g| {
            let bad = malicious.then(|| {
                let b = rng.gen_range(0..s - 1);
                if b >= g {
                    b + 1
                } else {
                    b
                }
            });
            Expertise { good: g, bad }
        })
        .collect())
}

/// A simulated worker population.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerPool {
    pub model: WorkerModel,
    pub expertise: Vec<Expertise>,
}

impl WorkerPool {
    pub fn new(model: WorkerModel, expertise: Vec<Expertise>) -> Result<Self> {
        model.validate()?;
        Ok(Self { model, expertise })
    }

    pub fn sample(k: usize, s: usize, model: WorkerModel, seed: u64) -> Result<Self> {
        Self::new(model, assign_expertise(k, s, model, seed)?)
    }

    pub fn n_workers(&self) -> usize {
        self.expertise.len()
    }
}

/// Full label matrix: each worker answers each task correctly with its
/// accuracy for the task's context and flips the label otherwise.
pub fn generate_labels(
    pool: &WorkerPool,
    truth: &GroundTruth,
    contexts: &ContextAssignment,
    seed: u64,
) -> Result<LabelMatrix> {
    if truth.len() != contexts.n_tasks() {
        return Err(Error::DimensionMismatch(format!(
            "{} truth labels for {} tasks",
            truth.len(),
            contexts.n_tasks()
        )));
    }
    let s_count = contexts.n_contexts();
    for e in &pool.expertise {
        if e.good >= s_count || e.bad.is_some_and(|b| b >= s_count || b == e.good) {
            return Err(Error::InvalidParameter(format!("invalid expertise {e:?} for {s_count} contexts")));
        }
    }
    let k = pool.n_workers();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(truth.len() * k);
    for task in 0..truth.len() {
        let s = contexts.context_of(task);
        let y = truth.get(task);
        for e in &pool.expertise {
            let a = pool.model.accuracy(e, s);
            let correct = rng.gen::<f64>() < a;
            entries.push(if correct { y.value() } else { y.flip().value() });
        }
    }
    LabelMatrix::from_entries(truth.len(), k, entries)
}

/// Fraction of tasks each worker labels correctly.
pub fn worker_true_accuracy(matrix: &LabelMatrix, truth: &GroundTruth) -> Result<Vec<f64>> {
    if matrix.n_tasks() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} matrix rows for {} truth labels",
            matrix.n_tasks(),
            truth.len()
        )));
    }
    let mut correct = vec![0usize; matrix.n_workers()];
    for task in 0..matrix.n_tasks() {
        let y = truth.get(task).value();
        for (j, &v) in matrix.row(task).iter().enumerate() {
            if v == 0 {
                return Err(Error::IncompleteMatrix { task, worker: j });
            }
            correct[j] += usize::from(v == y);
        }
    }
    let n = matrix.n_tasks() as f64;
    Ok(correct.into_iter().map(|c| c as f64 / n).collect())
}

/// Well-separated Gaussian blobs with uniformly random true labels: blob `c`
/// holds `round(proportions[c] * n)` tasks (the last absorbs rounding).
pub fn synthetic_features(
    n_tasks: usize,
    proportions: &[f64],
    seed: u64,
) -> Result<(FeatureTable, GroundTruth)> {
    if proportions.is_empty() || proportions.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidParameter("proportions must be positive".into()));
    }
    let total: f64 = proportions.iter().sum();
    let s = proportions.len();
    let mut sizes: Vec<usize> = proportions
        .iter()
        .map(|p| (p / total * n_tasks as f64).round() as usize)
        .collect();
    let assigned: usize = sizes[..s - 1].iter().sum();
    if assigned >= n_tasks {
        return Err(Error::InvalidParameter(format!("{n_tasks} tasks cannot fill {s} groups")));
    }
    sizes[s - 1] = n_tasks - assigned;
    if sizes.contains(&0) {
        return Err(Error::InvalidParameter(format!("{n_tasks} tasks leave a group empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| {
        // Box-Muller
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let d = s.max(2);
    let mut values = Vec::with_capacity(n_tasks * d);
    let mut labels = Vec::with_capacity(n_tasks);
    for (group, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            for dim in 0..d {
                let centre = if dim == group { 20.0 } else { 0.0 };
                values.push(centre + normal(&mut rng));
            }
            labels.push(if rng.gen_bool(0.5) { Label::Positive } else { Label::Negative });
        }
    }
    Ok((FeatureTable::new(n_tasks, d, values)?, GroundTruth::new(labels)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_table() -> FeatureTable {
        let mut rows = Vec::new();
        for centre in [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)] {
            for _ in 0..5 {
                rows.push(vec![centre.0, centre.1]);
            }
        }
        FeatureTable::from_rows(&rows).unwrap()
    }

    #[test]
    fn kmeans_recovers_identical_groups() {
        let ctx = kmeans_contexts(&blob_table(), 3, 17).unwrap();
        for group in 0..3 {
            let label = ctx.context_of(group * 5);
            for i in 0..5 {
                assert_eq!(ctx.context_of(group * 5 + i), label);
            }
        }
        assert_eq!(ctx.counts(), vec![5, 5, 5]);
    }

    #[test]
    fn kmeans_single_cluster_and_determinism() {
        let t = blob_table();
        assert_eq!(kmeans_contexts(&t, 1, 0).unwrap().counts(), vec![15]);
        assert_eq!(kmeans_contexts(&t, 3, 5).unwrap(), kmeans_contexts(&t, 3, 5).unwrap());
    }

    #[test]
    fn kmeans_needs_distinct_points() {
        let t = FeatureTable::from_rows(&[vec![1.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(
            kmeans_contexts(&t, 3, 0).unwrap_err(),
            Error::TooFewDistinctPoints { distinct: 2, clusters: 3 }
        );
    }

    #[test]
    fn kmeans_every_cluster_non_empty() {
        // a heavy outlier tempts Lloyd into leaving a cluster empty
        let mut rows: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i) * 0.01]).collect();
        rows.push(vec![1000.0]);
        let t = FeatureTable::from_rows(&rows).unwrap();
        for seed in 0..20 {
            let ctx = kmeans_contexts(&t, 4, seed).unwrap();
            assert!(ctx.counts().iter().all(|&c| c > 0));
        }
    }

    #[test]
    fn expertise_covers_every_context() {
        for seed in 0..50 {
            let e = assign_expertise(30, 3, WorkerModel::SpammerHammer, seed).unwrap();
            for s in 0..3 {
                assert!(e.iter().any(|x| x.good == s));
            }
        }
        let e = assign_expertise(4, 1, WorkerModel::SpammerHammer, 0).unwrap();
        assert!(e.iter().all(|x| x.good == 0));
    }

    #[test]
    fn malicious_expertise_on_two_contexts() {
        let e = assign_expertise(10, 2, WorkerModel::ONE_COIN_MALICIOUS, 3).unwrap();
        for x in e {
            assert_eq!(x.bad, Some(1 - x.good));
        }
        assert!(assign_expertise(10, 1, WorkerModel::ONE_COIN_MALICIOUS, 3).is_err());
    }

    #[test]
    fn hammers_are_exact_and_spammers_fair() {
        let n = 10_000;
        let contexts = ContextAssignment::new(2, (0..n).map(|t| t % 2).collect()).unwrap();
        let truth = GroundTruth::new((0..n).map(|t| if t % 3 == 0 { Label::Negative } else { Label::Positive }).collect());
        let pool = WorkerPool::new(WorkerModel::SpammerHammer, vec![Expertise { good: 0, bad: None }]).unwrap();
        let m = generate_labels(&pool, &truth, &contexts, 9).unwrap();
        assert!(m.is_complete());
        let mut spam_correct = 0;
        for t in 0..n {
            if t % 2 == 0 {
                assert_eq!(m.get(t, 0), truth.get(t).value());
            } else {
                spam_correct += usize::from(m.get(t, 0) == truth.get(t).value());
            }
        }
        let acc = spam_correct as f64 / (n / 2) as f64;
        // 4 sigma at n = 5000 is 0.028; the coarser 0.02 band is used for 10,000 labels below
        assert!((acc - 0.5).abs() < 0.03, "{acc}");
    }

    #[test]
    fn spammer_band_at_ten_thousand_labels() {
        let n = 10_000;
        let contexts = ContextAssignment::new(2, (0..n).map(|t| usize::from(t == 0)).collect()).unwrap();
        let truth = GroundTruth::new(vec![Label::Positive; n]);
        let pool = WorkerPool::new(WorkerModel::SpammerHammer, vec![Expertise { good: 1, bad: None }]).unwrap();
        let m = generate_labels(&pool, &truth, &contexts, 1).unwrap();
        let acc = (1..n).filter(|&t| m.get(t, 0) == 1).count() as f64 / (n - 1) as f64;
        assert!((acc - 0.5).abs() <= 0.02, "{acc}");
    }

    #[test]
    fn one_coin_good_context_accuracy() {
        let n = 300;
        let contexts = ContextAssignment::homogeneous(n).unwrap();
        let truth = GroundTruth::new(vec![Label::Negative; n]);
        let pool = WorkerPool::new(WorkerModel::ONE_COIN, vec![Expertise { good: 0, bad: None }]).unwrap();
        let m = generate_labels(&pool, &truth, &contexts, 4).unwrap();
        let acc = worker_true_accuracy(&m, &truth).unwrap()[0];
        assert!((acc - 0.9).abs() <= 4.0 * (0.9f64 * 0.1 / 300.0).sqrt(), "{acc}");
    }

    #[test]
    fn one_coin_mixture_accuracy() {
        let n = 300;
        let contexts = ContextAssignment::new(3, (0..n).map(|t| t % 3).collect()).unwrap();
        let truth = GroundTruth::new(vec![Label::Positive; n]);
        let pool = WorkerPool::sample(30, 3, WorkerModel::ONE_COIN, 12).unwrap();
        let m = generate_labels(&pool, &truth, &contexts, 13).unwrap();
        let accs = worker_true_accuracy(&m, &truth).unwrap();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.7).abs() <= 0.05, "{mean}");
    }

    #[test]
    fn true_accuracy_extremes() {
        let truth = GroundTruth::new(vec![Label::Positive, Label::Negative]);
        let m = LabelMatrix::from_rows(&[vec![1, -1], vec![-1, 1]]).unwrap();
        assert_eq!(worker_true_accuracy(&m, &truth).unwrap(), vec![1.0, 0.0]);
        let m = LabelMatrix::from_rows(&[vec![1, 0], vec![-1, 1]]).unwrap();
        assert!(matches!(worker_true_accuracy(&m, &truth), Err(Error::IncompleteMatrix { .. })));
    }

    #[test]
    fn labels_are_reproducible() {
        let contexts = ContextAssignment::new(3, (0..90).map(|t| t % 3).collect()).unwrap();
        let truth = GroundTruth::new(vec![Label::Positive; 90]);
        let pool = WorkerPool::sample(10, 3, WorkerModel::ONE_COIN_MALICIOUS, 2).unwrap();
        let a = generate_labels(&pool, &truth, &contexts, 77).unwrap();
        let b = generate_labels(&pool, &truth, &contexts, 77).unwrap();
        assert_eq!(a, b);
        assert!(a.entries().iter().all(|&v| v == 1 || v == -1));
    }

    #[test]
    fn synthetic_blobs_cluster_back() {
        let (features, truth) = synthetic_features(300, &[0.7, 0.2, 0.1], 1).unwrap();
        assert_eq!(truth.len(), 300);
        let ctx = kmeans_contexts(&features, 3, 1).unwrap();
        let mut counts = ctx.counts();
        counts.sort_unstable();
        assert_eq!(counts, vec![30, 60, 210]);
    }
}
