//! Two-phase bandit task assignment.
//!
//! A pure exploration batch seeds per-context cumulative losses, then every
//! budget unit runs one adaptive step: pick a task with a [`StrategyKind`],
//! draw a worker with probability proportional to its exponential weight,
//! collect the label, score the worker against the weighted vote and charge
//! the importance-weighted loss to the drawn worker only.

use rand::seq::index;
use rand::Rng;

use crate::aggregation::{majority_vote, scores_unchecked, vote_unchecked, TaskScores};
use crate::error::{Error, Result};
use crate::strategy::{select_task, StrategyKind};
use crate::types::{BudgetLedger, ContextAssignment, Label, LabelMatrix, LossTable};

/// Source of worker answers. Must answer consistently for a given pair.
pub trait LabelOracle {
    fn label(&self, task: usize, worker: usize) -> Label;
}

impl<F: Fn(usize, usize) -> Label> LabelOracle for F {
    fn label(&self, task: usize, worker: usize) -> Label {
        self(task, worker)
    }
}

/// Oracle backed by a complete label matrix.
#[derive(Debug, Clone)]
pub struct MatrixOracle(LabelMatrix);

impl MatrixOracle {
    pub fn new(matrix: LabelMatrix) -> Result<Self> {
        for task in 0..matrix.n_tasks() {
            if let Some(worker) = matrix.row(task).iter().position(|&y| y == 0) {
                return Err(Error::IncompleteMatrix { task, worker });
            }
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &LabelMatrix {
        &self.0
    }
}

impl LabelOracle for MatrixOracle {
    fn label(&self, task: usize, worker: usize) -> Label {
        // completeness is checked at construction
        self.0.label(task, worker).expect("complete matrix")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkerDraw {
    pub worker: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Exploration,
    Adaptive,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Exploration => "explore",
            Phase::Adaptive => "adapt",
        }
    }
}

/// One label request.
///
/// For exploration events `loss` is the disagreement indicator against the
/// equal-weight vote and `probability` is 1. For adaptive events `loss` is
/// the observed 0/1 loss before importance weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub step: usize,
    pub phase: Phase,
    pub task: usize,
    pub context: usize,
    pub worker: usize,
    pub probability: f64,
    pub label: Label,
    pub vote: Label,
    pub loss: f64,
}

/// `sqrt(ln K / (t K))`.
pub fn learning_rate(context_steps: usize, n_workers: usize) -> Result<f64> {
    if n_workers < 2 {
        return Err(Error::TooFewWorkers(n_workers));
    }
    if context_steps == 0 {
        return Err(Error::InvalidParameter("learning rate needs t >= 1".into()));
    }
    let k = n_workers as f64;
    Ok((k.ln() / (context_steps as f64 * k)).sqrt())
}

/// `w_j = exp(-eta * L_j)`.
pub fn compute_weights(losses_for_context: &[f64], eta: f64) -> Vec<f64> {
    losses_for_context.iter().map(|&l| (-eta * l).exp()).collect()
}

/// Draws a worker from `eligible` with probability proportional to its weight.
pub fn select_worker<R: Rng + ?Sized>(
    weights: &[f64],
    eligible: &[usize],
    rng: &mut R,
) -> Result<WorkerDraw> {
    if eligible.is_empty() {
        return Err(Error::NoEligibleWorkers);
    }
    let mut total = 0.0;
    for &j in eligible {
        let w = weights[j];
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidWeight { worker: j, weight: w });
        }
        total += w;
    }
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut worker = *eligible.last().expect("non-empty");
    for &j in eligible {
        acc += weights[j];
        if target < acc {
            worker = j;
            break;
        }
    }
    Ok(WorkerDraw {
        worker,
        probability: weights[worker] / total,
    })
}

/// Charges `observed_loss / probability` to the drawn worker.
pub fn loss_update(observed_loss: f64, draw: WorkerDraw, losses_for_context: &mut [f64]) -> Result<()> {
    if !(draw.probability > 0.0 && draw.probability <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "draw probability must be in (0, 1], got {}",
            draw.probability
        )));
    }
    if !(observed_loss >= 0.0 && observed_loss.is_finite()) {
        return Err(Error::InvalidParameter(format!("invalid loss {observed_loss}")));
    }
    losses_for_context[draw.worker] += observed_loss / draw.probability;
    Ok(())
}

/// Result of the pure exploration phase.
#[derive(Debug, Clone)]
pub struct Exploration {
    pub losses: LossTable,
    /// Explored task ids, grouped by context.
    pub explored: Vec<usize>,
    pub matrix: LabelMatrix,
    pub events: Vec<Event>,
}

impl Exploration {
    pub fn labels_collected(&self) -> usize {
        self.events.len()
    }
}

/// Lets every worker label `n_prime` uniformly drawn tasks of each context
/// and counts each worker's disagreements with the equal-weight vote.
pub fn pure_exploration<O: LabelOracle + ?Sized, R: Rng + ?Sized>(
    contexts: &ContextAssignment,
    n_workers: usize,
    budget: usize,
    n_prime: usize,
    oracle: &O,
    rng: &mut R,
) -> Result<Exploration> {
    let n_contexts = contexts.n_contexts();
    let cost = n_contexts * n_workers * n_prime;
    if cost >= budget {
        return Err(Error::BudgetTooSmall { exploration: cost, total: budget });
    }
    for s in 0..n_contexts {
        if contexts.count(s) < n_prime {
            return Err(Error::InsufficientTasks {
                context: s,
                available: contexts.count(s),
                needed: n_prime,
            });
        }
    }
    let mut matrix = LabelMatrix::empty(contexts.n_tasks(), n_workers);
    let mut losses = LossTable::zeros(n_contexts, n_workers);
    let mut explored = Vec::with_capacity(n_contexts * n_prime);
    let mut events = Vec::with_capacity(cost);
    for s in 0..n_contexts {
        let members = contexts.members(s);
        let mut picked: Vec<usize> = index::sample(rng, members.len(), n_prime)
            .into_iter()
            .map(|i| members[i])
            .collect();
        picked.sort_unstable();
        for task in picked {
            for worker in 0..n_workers {
                matrix.set(task, worker, oracle.label(task, worker))?;
            }
            let vote = majority_vote(matrix.row(task), rng)?;
            for worker in 0..n_workers {
                let label = matrix.label(task, worker).expect("just labeled");
                let loss = if label == vote { 0.0 } else { 1.0 };
                losses.add(s, worker, loss)?;
                events.push(Event {
                    step: events.len() + 1,
                    phase: Phase::Exploration,
                    task,
                    context: s,
                    worker,
                    probability: 1.0,
                    label,
                    vote,
                    loss,
                });
            }
            explored.push(task);
        }
    }
    Ok(Exploration {
        losses,
        explored,
        matrix,
        events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Total budget `T`.
    pub budget: usize,
    /// Tasks explored per context.
    pub n_prime: usize,
    /// Multiplier applied to [`learning_rate`].
    pub eta_scale: f64,
    /// Recompute every candidate's scores after each step and assert that the
    /// incremental bookkeeping matches.
    pub verify_scores: bool,
}

impl RunConfig {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            n_prime: 1,
            eta_scale: 1.0,
            verify_scores: false,
        }
    }
}

/// What one adaptive step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub task: usize,
    pub context: usize,
    pub worker: usize,
    pub probability: f64,
    pub label: Label,
    pub vote: Label,
    pub loss: f64,
}

/// Mutable state of one run. Owned by a single engine; not shared.
#[derive(Debug, Clone)]
pub struct EngineState {
    contexts: ContextAssignment,
    n_workers: usize,
    matrix: LabelMatrix,
    losses: LossTable,
    ledger: BudgetLedger,
    candidates: Vec<usize>,
    is_candidate: Vec<bool>,
    explored: Vec<usize>,
    scores: Vec<TaskScores>,
    weights: Vec<f64>,
    weight_totals: Vec<f64>,
    eta_scale: f64,
    verify_scores: bool,
    events: Vec<Event>,
}

impl EngineState {
    /// Runs pure exploration and prepares the adaptive phase.
    pub fn explore<O: LabelOracle + ?Sized, R: Rng + ?Sized>(
        contexts: ContextAssignment,
        n_workers: usize,
        config: &RunConfig,
        oracle: &O,
        rng: &mut R,
    ) -> Result<Self> {
        if n_workers < 2 {
            return Err(Error::TooFewWorkers(n_workers));
        }
        if !(config.eta_scale > 0.0 && config.eta_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eta_scale must be positive, got {}",
                config.eta_scale
            )));
        }
        let ledger = BudgetLedger::new(config.budget, contexts.n_contexts(), n_workers, config.n_prime)?;
        let exploration =
            pure_exploration(&contexts, n_workers, config.budget, config.n_prime, oracle, rng)?;
        debug_assert_eq!(exploration.events.len(), ledger.exploration_spent());

        let n = contexts.n_tasks();
        let mut is_candidate = vec![true; n];
        for &t in &exploration.explored {
            is_candidate[t] = false;
        }
        let candidates = (0..n).filter(|&t| is_candidate[t]).collect();
        let n_contexts = contexts.n_contexts();
        let mut state = Self {
            contexts,
            n_workers,
            matrix: exploration.matrix,
            losses: exploration.losses,
            ledger,
            candidates,
            is_candidate,
            explored: exploration.explored,
            scores: vec![TaskScores::default(); n],
            weights: vec![1.0; n_contexts * n_workers],
            weight_totals: vec![n_workers as f64; n_contexts],
            eta_scale: config.eta_scale,
            verify_scores: config.verify_scores,
            events: exploration.events,
        };
        for s in 0..n_contexts {
            state.refresh_context(s)?;
        }
        Ok(state)
    }

    pub fn contexts(&self) -> &ContextAssignment {
        &self.contexts
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn matrix(&self) -> &LabelMatrix {
        &self.matrix
    }

    pub fn losses(&self) -> &LossTable {
        &self.losses
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn explored(&self) -> &[usize] {
        &self.explored
    }

    pub fn scores(&self, task: usize) -> TaskScores {
        self.scores[task]
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Weights the next step in context `s` will use:
    /// `exp(-eta_{t^s + 1} (L^s - min L^s))`, i.e. the exponential weights
    /// rescaled so the best worker has weight 1.
    pub fn weights(&self, s: usize) -> &[f64] {
        &self.weights[s * self.n_workers..(s + 1) * self.n_workers]
    }

    /// Tasks that have not received a single label.
    pub fn unlabeled_count(&self) -> usize {
        (0..self.matrix.n_tasks())
            .filter(|&t| self.matrix.labeled_count(t) == 0)
            .count()
    }

    /// Weighted-vote estimate of every task under the current weights.
    pub fn estimates<R: Rng + ?Sized>(&self, tie_break: &mut R) -> Vec<Label> {
        (0..self.matrix.n_tasks())
            .map(|t| {
                let s = self.contexts.context_of(t);
                vote_unchecked(self.matrix.row(t), self.weights(s), self.weight_totals[s], tie_break)
            })
            .collect()
    }

    fn refresh_context(&mut self, s: usize) -> Result<()> {
        let eta = self.eta_scale * learning_rate(self.ledger.context_steps(s) + 1, self.n_workers)?;
        let k = self.n_workers;
        let losses = self.losses.row(s);
        let floor = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let row = &mut self.weights[s * k..(s + 1) * k];
        for (w, &l) in row.iter_mut().zip(losses) {
            // shifted by the smallest loss; normalised decisions are unchanged
            *w = (-eta * (l - floor)).exp().max(f64::MIN_POSITIVE);
        }
        let total: f64 = row.iter().sum();
        self.weight_totals[s] = total;
        let weights = &self.weights[s * k..(s + 1) * k];
        for &t in self.contexts.members(s) {
            if self.is_candidate[t] {
                self.scores[t] = scores_unchecked(self.matrix.row(t), weights, total);
            }
        }
        Ok(())
    }

    fn check_scores(&self) {
        for &t in &self.candidates {
            let s = self.contexts.context_of(t);
            let total: f64 = self.weights(s).iter().sum();
            let expected = scores_unchecked(self.matrix.row(t), self.weights(s), total);
            assert_eq!(self.scores[t], expected, "stale scores for task {t}");
        }
    }

    /// Spends one budget unit.
    pub fn adaptive_step<O: LabelOracle + ?Sized, R: Rng + ?Sized>(
        &mut self,
        kind: StrategyKind,
        oracle: &O,
        rng: &mut R,
    ) -> Result<StepRecord> {
        if self.ledger.remaining() == 0 {
            return Err(Error::BudgetExhausted);
        }
        let task = select_task(kind, &self.candidates, &self.scores, &self.contexts, rng)?;
        let s = self.contexts.context_of(task);
        let k = self.n_workers;

        let eligible: Vec<usize> = (0..k).filter(|&j| self.matrix.get(task, j) == 0).collect();
        let draw = select_worker(self.weights(s), &eligible, rng)?;
        let label = oracle.label(task, draw.worker);
        self.matrix.set(task, draw.worker, label)?;

        let vote = vote_unchecked(self.matrix.row(task), self.weights(s), self.weight_totals[s], rng);
        let loss = if vote == label { 0.0 } else { 1.0 };
        loss_update(loss, draw, self.losses.row_mut(s))?;
        self.ledger.charge_adaptive(s)?;

        if self.matrix.labeled_count(task) == k {
            self.is_candidate[task] = false;
            if let Ok(pos) = self.candidates.binary_search(&task) {
                self.candidates.remove(pos);
            }
        }
        self.refresh_context(s)?;
        if self.verify_scores {
            self.check_scores();
        }

        self.events.push(Event {
            step: self.ledger.spent(),
            phase: Phase::Adaptive,
            task,
            context: s,
            worker: draw.worker,
            probability: draw.probability,
            label,
            vote,
            loss,
        });
        Ok(StepRecord {
            task,
            context: s,
            worker: draw.worker,
            probability: draw.probability,
            label,
            vote,
            loss,
        })
    }
}

/// Final state of a run plus the unused budget when the candidate pool
/// emptied before the budget did.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: EngineState,
    pub shortfall: usize,
}

/// Exploration followed by adaptive steps until the budget or the candidate
/// pool runs out. `observer` sees the state after exploration and after
/// every adaptive step.
pub fn run<O, R, F>(
    contexts: ContextAssignment,
    n_workers: usize,
    kind: StrategyKind,
    oracle: &O,
    config: &RunConfig,
    rng: &mut R,
    mut observer: F,
) -> Result<RunOutcome>
where
    O: LabelOracle + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&EngineState),
{
    let mut state = EngineState::explore(contexts, n_workers, config, oracle, rng)?;
    observer(&state);
    while state.ledger.remaining() > 0 && !state.candidates.is_empty() {
        state.adaptive_step(kind, oracle, rng)?;
        observer(&state);
    }
    let shortfall = state.ledger.remaining();
    Ok(RunOutcome { state, shortfall })
}

/// Rebuilds the cumulative loss table from an event log.
pub fn replay_losses(events: &[Event], n_contexts: usize, n_workers: usize) -> Result<LossTable> {
    let mut table = LossTable::zeros(n_contexts, n_workers);
    for e in events {
        if e.context >= n_contexts || e.worker >= n_workers {
            return Err(Error::DimensionMismatch(format!(
                "event {} refers to context {} / worker {}",
                e.step, e.context, e.worker
            )));
        }
        let increment = match e.phase {
            Phase::Exploration => e.loss,
            Phase::Adaptive => e.loss / e.probability,
        };
        table.add(e.context, e.worker, increment)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn learning_rate_examples() {
        let r1 = learning_rate(1, 2).unwrap();
        // sqrt(ln 2 / 2), 40-digit reference evaluation
        assert_abs_diff_eq!(r1, 0.588_705_011_257_737_3, epsilon = 1e-15);
        assert_abs_diff_eq!(learning_rate(4, 2).unwrap(), r1 / 2.0, epsilon = 1e-16);
        assert!(learning_rate(1_000_000, 2).unwrap() < 1e-3);
        assert!(learning_rate(5, 30).unwrap() < learning_rate(4, 30).unwrap());
        assert_eq!(learning_rate(1, 1), Err(Error::TooFewWorkers(1)));
    }

    #[test]
    fn weight_examples() {
        assert_eq!(compute_weights(&[0.0; 4], 0.7), vec![1.0; 4]);
        let w = compute_weights(&[0.0, 10.0], 1.0);
        assert_eq!(w[0], 1.0);
        assert_abs_diff_eq!(w[1], 4.539_992_976_248_485e-5, epsilon = 1e-18);
        let losses = [0.3, 2.0, 5.5];
        let single = compute_weights(&losses, 0.4);
        let double = compute_weights(&losses, 0.8);
        for (a, b) in single.iter().zip(&double) {
            assert_abs_diff_eq!(a * a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn worker_draw_examples() {
        let mut r = rng(3);
        let d = select_worker(&[1.0; 4], &[0, 1, 2, 3], &mut r).unwrap();
        assert_eq!(d.probability, 0.25);
        let d = select_worker(&[5.0, 1.0, 2.0], &[2], &mut r).unwrap();
        assert_eq!(d, WorkerDraw { worker: 2, probability: 1.0 });
        assert_eq!(select_worker(&[1.0], &[], &mut r), Err(Error::NoEligibleWorkers));
    }

    #[test]
    fn worker_draw_frequencies() {
        let mut r = rng(11);
        let n = 10_000;
        let mut first = 0;
        for _ in 0..n {
            let d = select_worker(&[3.0, 1.0], &[0, 1], &mut r).unwrap();
            let expected = if d.worker == 0 { 0.75 } else { 0.25 };
            assert_eq!(d.probability, expected);
            first += usize::from(d.worker == 0);
        }
        let sigma = (n as f64 * 0.75 * 0.25).sqrt();
        assert!((first as f64 - 0.75 * n as f64).abs() < 4.0 * sigma, "{first}");
    }

    #[test]
    fn loss_update_examples() {
        let mut l = vec![1.0, 2.0, 3.0];
        loss_update(1.0, WorkerDraw { worker: 1, probability: 0.5 }, &mut l).unwrap();
        assert_eq!(l, [1.0, 4.0, 3.0]);
        loss_update(0.0, WorkerDraw { worker: 0, probability: 0.1 }, &mut l).unwrap();
        assert_eq!(l, [1.0, 4.0, 3.0]);
        loss_update(1.0, WorkerDraw { worker: 2, probability: 1.0 }, &mut l).unwrap();
        assert_eq!(l, [1.0, 4.0, 4.0]);
        assert!(loss_update(1.0, WorkerDraw { worker: 0, probability: 0.0 }, &mut l).is_err());
    }

    proptest! {
        #[test]
        fn shifting_losses_keeps_distribution(
            losses in prop::collection::vec(0.0f64..50.0, 2..20),
            shift in 0.0f64..50.0,
            eta in 0.01f64..1.0,
        ) {
            let base = compute_weights(&losses, eta);
            let shifted: Vec<f64> = losses.iter().map(|l| l + shift).collect();
            let moved = compute_weights(&shifted, eta);
            let (sa, sb): (f64, f64) = (base.iter().sum(), moved.iter().sum());
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((a / sa - b / sb).abs() <= 1e-12);
            }
        }
    }

    fn single_context_oracle(flip_worker: usize) -> impl Fn(usize, usize) -> Label {
        move |_, j| if j == flip_worker { Label::Negative } else { Label::Positive }
    }

    #[test]
    fn exploration_costs_skn() {
        let contexts = ContextAssignment::new(3, (0..30).map(|t| t % 3).collect()).unwrap();
        let oracle = |_: usize, _: usize| Label::Positive;
        let ex = pure_exploration(&contexts, 30, 4500, 1, &oracle, &mut rng(1)).unwrap();
        assert_eq!(ex.labels_collected(), 90);
        assert_eq!(ex.explored.len(), 3);
        for s in 0..3 {
            assert!(ex.losses.row(s).iter().all(|&l| l == 0.0));
        }
    }

    #[test]
    fn exploration_charges_dissenter() {
        let contexts = ContextAssignment::homogeneous(5).unwrap();
        let ex = pure_exploration(&contexts, 5, 100, 1, &single_context_oracle(2), &mut rng(2)).unwrap();
        assert_eq!(ex.losses.row(0), &[0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn exploration_preconditions() {
        let contexts = ContextAssignment::new(2, vec![0, 1, 1]).unwrap();
        let oracle = |_: usize, _: usize| Label::Positive;
        assert_eq!(
            pure_exploration(&contexts, 3, 100, 2, &oracle, &mut rng(0)).unwrap_err(),
            Error::InsufficientTasks { context: 0, available: 1, needed: 2 }
        );
        assert_eq!(
            pure_exploration(&contexts, 3, 6, 1, &oracle, &mut rng(0)).unwrap_err(),
            Error::BudgetTooSmall { exploration: 6, total: 6 }
        );
    }

    #[test]
    fn first_adaptive_label_on_fresh_task() {
        // K = 2, one context: after exploration both workers agree so the
        // weights stay equal; one +1 label on a fresh task gives (0.5, 0)
        let contexts = ContextAssignment::homogeneous(3).unwrap();
        let oracle = |_: usize, _: usize| Label::Positive;
        let mut r = rng(5);
        let cfg = RunConfig::new(10);
        let mut state = EngineState::explore(contexts, 2, &cfg, &oracle, &mut r).unwrap();
        let step = state.adaptive_step(StrategyKind::LeastConfidence, &oracle, &mut r).unwrap();
        assert_eq!(state.scores(step.task), TaskScores { positive: 0.5, negative: 0.0 });
        assert_eq!(step.loss, 0.0);
    }

    #[test]
    fn task_retires_after_last_worker() {
        let contexts = ContextAssignment::homogeneous(2).unwrap();
        let oracle = |_: usize, _: usize| Label::Positive;
        let mut r = rng(8);
        let cfg = RunConfig { verify_scores: true, ..RunConfig::new(100) };
        let mut state = EngineState::explore(contexts, 3, &cfg, &oracle, &mut r).unwrap();
        assert_eq!(state.candidates().len(), 1);
        let task = state.candidates()[0];
        for expected_left in [1, 1, 0] {
            state.adaptive_step(StrategyKind::MarginSampling, &oracle, &mut r).unwrap();
            assert_eq!(state.candidates().len(), expected_left);
        }
        assert_eq!(state.matrix().labeled_count(task), 3);
        assert_eq!(
            state.adaptive_step(StrategyKind::MarginSampling, &oracle, &mut r).unwrap_err(),
            Error::EmptyCandidates
        );
    }

    #[test]
    fn other_context_scores_untouched() {
        let contexts = ContextAssignment::new(2, (0..12).map(|t| t % 2).collect()).unwrap();
        let oracle = |t: usize, j: usize| if (t + j) % 3 == 0 { Label::Negative } else { Label::Positive };
        let mut r = rng(21);
        let cfg = RunConfig { verify_scores: true, ..RunConfig::new(200) };
        let mut state = EngineState::explore(contexts, 4, &cfg, &oracle, &mut r).unwrap();
        for _ in 0..40 {
            let before: Vec<(usize, u64, u64)> = state
                .candidates()
                .iter()
                .map(|&t| (t, state.scores(t).positive.to_bits(), state.scores(t).negative.to_bits()))
                .collect();
            let step = state.adaptive_step(StrategyKind::LeastConfidence, &oracle, &mut r).unwrap();
            for (t, p, n) in before {
                if state.contexts().context_of(t) != step.context {
                    assert_eq!(state.scores(t).positive.to_bits(), p);
                    assert_eq!(state.scores(t).negative.to_bits(), n);
                }
            }
        }
    }

    #[test]
    fn run_budget_and_termination() {
        let contexts = ContextAssignment::new(2, (0..20).map(|t| t % 2).collect()).unwrap();
        let oracle = |t: usize, j: usize| if (t * 7 + j) % 4 == 0 { Label::Negative } else { Label::Positive };
        let t1 = 2 * 5;
        let out = run(
            contexts.clone(),
            5,
            StrategyKind::LeastConfidence,
            &oracle,
            &RunConfig::new(t1 + 5),
            &mut rng(1),
            |_| {},
        )
        .unwrap();
        let adaptive = out.state.events().iter().filter(|e| e.phase == Phase::Adaptive).count();
        assert_eq!(adaptive, 5);
        assert_eq!(out.shortfall, 0);

        // 18 adaptive tasks x 5 workers = 90 labels available
        let out = run(contexts, 5, StrategyKind::Random, &oracle, &RunConfig::new(10_000), &mut rng(1), |_| {})
            .unwrap();
        assert_eq!(out.state.ledger().adaptive_spent(), 90);
        assert_eq!(out.shortfall, 10_000 - 10 - 90);
        assert!(out.state.matrix().is_complete());
    }

    #[test]
    fn replay_matches_final_losses() {
        let contexts = ContextAssignment::new(3, (0..60).map(|t| t % 3).collect()).unwrap();
        let oracle = |t: usize, j: usize| if (t * 31 + j * 17) % 5 < 2 { Label::Negative } else { Label::Positive };
        let out = run(
            contexts,
            6,
            StrategyKind::InfoDensityLc { beta: 0.05 },
            &oracle,
            &RunConfig::new(300),
            &mut rng(4),
            |_| {},
        )
        .unwrap();
        let replayed = replay_losses(out.state.events(), 3, 6).unwrap();
        for s in 0..3 {
            for j in 0..6 {
                assert!((replayed.get(s, j) - out.state.losses().get(s, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn matrix_oracle_requires_completeness() {
        let m = LabelMatrix::from_rows(&[vec![1, -1], vec![0, 1]]).unwrap();
        assert_eq!(MatrixOracle::new(m).unwrap_err(), Error::IncompleteMatrix { task: 1, worker: 0 });
    }
}
