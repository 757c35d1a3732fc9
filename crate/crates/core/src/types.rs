//! Domain types shared by every stage of the assignment loop.
//!
//! Tasks, workers and contexts are dense 0-based indices.

use std::fmt;

use crate::error::{Error, Result};

/// A binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(i8)]
pub enum Label {
    Negative = -1,
    Positive = 1,
}

impl Label {
    pub fn value(self) -> i8 {
        self as i8
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    /// Parses `-1` / `+1` (or `1`).
    pub fn from_value(value: i64) -> Option<Label> {
        match value {
            -1 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Dense `n_tasks x n_workers` grid of collected labels; `0` marks a label
/// that has not been collected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    n_tasks: usize,
    n_workers: usize,
    entries: Vec<i8>,
    row_counts: Vec<usize>,
}

impl LabelMatrix {
    /// An all-missing matrix.
    pub fn empty(n_tasks: usize, n_workers: usize) -> Self {
        Self {
            n_tasks,
            n_workers,
            entries: vec![0; n_tasks * n_workers],
            row_counts: vec![0; n_tasks],
        }
    }

    /// Builds a matrix from row-major entries, rejecting anything outside
    /// `{-1, 0, +1}`.
    pub fn from_entries(n_tasks: usize, n_workers: usize, entries: Vec<i8>) -> Result<Self> {
        if entries.len() != n_tasks * n_workers {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {}x{} matrix, got {}",
                n_tasks * n_workers,
                n_tasks,
                n_workers,
                entries.len()
            )));
        }
        let mut row_counts = vec![0; n_tasks];
        for (idx, &value) in entries.iter().enumerate() {
            if !(-1..=1).contains(&value) {
                return Err(Error::LabelOutOfRange {
                    task: idx / n_workers,
                    worker: idx % n_workers,
                    value: value.into(),
                });
            }
            if value != 0 {
                row_counts[idx / n_workers] += 1;
            }
        }
        Ok(Self {
            n_tasks,
            n_workers,
            entries,
            row_counts,
        })
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let n_workers = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_workers) {
            return Err(Error::DimensionMismatch(format!(
                "row {bad} has {} entries, expected {n_workers}",
                rows[bad].len()
            )));
        }
        Self::from_entries(rows.len(), n_workers, rows.concat())
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn get(&self, task: usize, worker: usize) -> i8 {
        self.entries[task * self.n_workers + worker]
    }

    pub fn row(&self, task: usize) -> &[i8] {
        &self.entries[task * self.n_workers..(task + 1) * self.n_workers]
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    /// Number of labels collected for `task`.
    pub fn labeled_count(&self, task: usize) -> usize {
        self.row_counts[task]
    }

    pub fn is_complete(&self) -> bool {
        self.row_counts.iter().all(|&c| c == self.n_workers)
    }

    /// Records a label. Only a missing entry may be filled.
    pub fn set(&mut self, task: usize, worker: usize, label: Label) -> Result<()> {
        if task >= self.n_tasks || worker >= self.n_workers {
            return Err(Error::DimensionMismatch(format!(
                "cell ({task}, {worker}) outside {}x{} matrix",
                self.n_tasks, self.n_workers
            )));
        }
        let cell = &mut self.entries[task * self.n_workers + worker];
        if *cell != 0 {
            return Err(Error::AlreadyLabeled { task, worker });
        }
        *cell = label.value();
        self.row_counts[task] += 1;
        Ok(())
    }

    /// Reads a label from a complete matrix.
    pub fn label(&self, task: usize, worker: usize) -> Option<Label> {
        Label::from_value(self.get(task, worker).into())
    }
}

/// Maps each task to its context and tracks the per-context totals `N^s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextAssignment {
    n_contexts: usize,
    context_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ContextAssignment {
    pub fn new(n_contexts: usize, context_of: Vec<usize>) -> Result<Self> {
        if n_contexts == 0 {
            return Err(Error::InvalidParameter("at least one context is required".into()));
        }
        let mut members = vec![Vec::new(); n_contexts];
        for (task, &s) in context_of.iter().enumerate() {
            if s >= n_contexts {
                return Err(Error::ContextOutOfRange {
                    task,
                    context: s,
                    n_contexts,
                });
            }
            members[s].push(task);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::EmptyContext(empty));
        }
        Ok(Self {
            n_contexts,
            context_of,
            members,
        })
    }

    /// Every task in a single context.
    pub fn homogeneous(n_tasks: usize) -> Result<Self> {
        Self::new(1, vec![0; n_tasks])
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_tasks(&self) -> usize {
        self.context_of.len()
    }

    pub fn context_of(&self, task: usize) -> usize {
        self.context_of[task]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.context_of
    }

    /// Tasks in context `s`, ascending.
    pub fn members(&self, s: usize) -> &[usize] {
        &self.members[s]
    }

    /// `N^s`.
    pub fn count(&self, s: usize) -> usize {
        self.members[s].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

/// Cumulative (importance-weighted) loss of every worker in every context.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    n_workers: usize,
    losses: Vec<f64>,
}

impl LossTable {
    pub fn zeros(n_contexts: usize, n_workers: usize) -> Self {
        Self {
            n_workers,
            losses: vec![0.0; n_contexts * n_workers],
        }
    }

    pub fn n_contexts(&self) -> usize {
        self.losses.len() / self.n_workers.max(1)
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn get(&self, context: usize, worker: usize) -> f64 {
        self.losses[context * self.n_workers + worker]
    }

    pub fn row(&self, context: usize) -> &[f64] {
        &self.losses[context * self.n_workers..(context + 1) * self.n_workers]
    }

    pub(crate) fn row_mut(&mut self, context: usize) -> &mut [f64] {
        &mut self.losses[context * self.n_workers..(context + 1) * self.n_workers]
    }

    /// Adds a non-negative finite increment. Entries never decrease.
    pub fn add(&mut self, context: usize, worker: usize, increment: f64) -> Result<()> {
        if !(increment >= 0.0 && increment.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "loss increment must be finite and non-negative, got {increment}"
            )));
        }
        self.losses[context * self.n_workers + worker] += increment;
        Ok(())
    }
}

/// Budget accounting for one run: `total = T`, `exploration_spent = T1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetLedger {
    total: usize,
    exploration_spent: usize,
    adaptive_spent: usize,
    context_steps: Vec<usize>,
}

impl BudgetLedger {
    /// Ledger for `n_contexts` contexts whose exploration phase costs
    /// `S * K * n_prime`; that cost must be strictly below `total`.
    pub fn new(total: usize, n_contexts: usize, n_workers: usize, n_prime: usize) -> Result<Self> {
        let exploration = n_contexts * n_workers * n_prime;
        if exploration >= total {
            return Err(Error::BudgetTooSmall { exploration, total });
        }
        Ok(Self {
            total,
            exploration_spent: exploration,
            adaptive_spent: 0,
            context_steps: vec![0; n_contexts],
        })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn exploration_spent(&self) -> usize {
        self.exploration_spent
    }

    pub fn adaptive_spent(&self) -> usize {
        self.adaptive_spent
    }

    pub fn spent(&self) -> usize {
        self.exploration_spent + self.adaptive_spent
    }

    pub fn remaining(&self) -> usize {
        self.total - self.spent()
    }

    /// `t^s`: adaptive steps taken in context `s`.
    pub fn context_steps(&self, s: usize) -> usize {
        self.context_steps[s]
    }

    pub fn all_context_steps(&self) -> &[usize] {
        &self.context_steps
    }

    pub(crate) fn charge_adaptive(&mut self, context: usize) -> Result<()> {
        if self.remaining() == 0 {
            return Err(Error::BudgetExhausted);
        }
        self.adaptive_spent += 1;
        self.context_steps[context] += 1;
        Ok(())
    }
}

/// True labels. Used by worker simulation and evaluation only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth(Vec<Label>);

impl GroundTruth {
    pub fn new(labels: Vec<Label>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, task: usize) -> Label {
        self.0[task]
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }
}

/// Checks that a matrix, context map, budget and (optionally) truth form a
/// consistent instance. Returns the first violated invariant.
pub fn validate_instance(
    matrix: &LabelMatrix,
    contexts: &ContextAssignment,
    budget: &BudgetLedger,
    truth: Option<&GroundTruth>,
) -> Result<()> {
    if matrix.entries.len() != matrix.n_tasks * matrix.n_workers {
        return Err(Error::DimensionMismatch("matrix storage does not match its shape".into()));
    }
    for (idx, &value) in matrix.entries.iter().enumerate() {
        if !(-1..=1).contains(&value) {
            return Err(Error::LabelOutOfRange {
                task: idx / matrix.n_workers,
                worker: idx % matrix.n_workers,
                value: value.into(),
            });
        }
    }
    if contexts.n_tasks() != matrix.n_tasks() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} tasks but context map has {}",
            matrix.n_tasks(),
            contexts.n_tasks()
        )));
    }
    if let Some(truth) = truth {
        if truth.len() != matrix.n_tasks() {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} tasks but ground truth has {}",
                matrix.n_tasks(),
                truth.len()
            )));
        }
    }
    for s in 0..contexts.n_contexts() {
        if contexts.count(s) == 0 {
            return Err(Error::EmptyContext(s));
        }
    }
    if contexts.counts().iter().sum::<usize>() != contexts.n_tasks() {
        return Err(Error::DimensionMismatch("context counts do not sum to N".into()));
    }
    if budget.context_steps.len() != contexts.n_contexts() {
        return Err(Error::DimensionMismatch(format!(
            "budget tracks {} contexts but instance has {}",
            budget.context_steps.len(),
            contexts.n_contexts()
        )));
    }
    if budget.exploration_spent >= budget.total {
        return Err(Error::BudgetTooSmall {
            exploration: budget.exploration_spent,
            total: budget.total,
        });
    }
    if budget.spent() > budget.total {
        return Err(Error::BudgetExhausted);
    }
    if budget.context_steps.iter().sum::<usize>() != budget.adaptive_spent {
        return Err(Error::InvalidParameter(
            "per-context step counters do not sum to adaptive spend".into(),
        ));
    }
    Ok(())
}
