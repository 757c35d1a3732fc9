//! CSV writers. Summary reals are rendered with six significant digits.
//! Event-log probabilities and run-level accuracies round-trip exactly, so
//! logs can be replayed and summaries recomputed from the raw rows.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ExperimentResult, HarnessError, SweepBase, SweepRow, WorkerAccuracies};
use crate::bandit::{Event, Phase};
use crate::strategy::StrategyKind;
use crate::types::Label;

const EVENT_HEADER: &str = "step,phase,task,context,worker,probability,label,vote,loss";

/// `%g`-style rendering with six significant digits.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), format_g6)
}

/// File-name form of a strategy (`id-lc:0.05` -> `id-lc_0.05`).
pub fn strategy_file_tag(kind: &StrategyKind) -> String {
    kind.to_string().replace(':', "_")
}

fn write_file(path: &Path, body: &str) -> Result<(), HarnessError> {
    fs::write(path, body).map_err(|e| HarnessError::io(path, e))
}

pub fn write_event_log(events: &[Event]) -> String {
    let mut out = String::with_capacity(events.len() * 40);
    out.push_str(EVENT_HEADER);
    out.push('\n');
    for e in events {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.step,
            e.phase.as_str(),
            e.task,
            e.context,
            e.worker,
            e.probability,
            e.label,
            e.vote,
            e.loss
        )
        .expect("string write");
    }
    out
}

pub fn read_event_log(path: &Path) -> Result<Vec<Event>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(EVENT_HEADER) {
        return Err(HarnessError::input(path, "not an event log (bad header)"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = || HarnessError::input(path, format!("line {}: malformed event {line:?}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad());
            }
            let phase = match f[1] {
                "explore" => Phase::Exploration,
                "adapt" => Phase::Adaptive,
                _ => return Err(bad()),
            };
            let label = |s: &str| s.parse::<i64>().ok().and_then(Label::from_value).ok_or_else(bad);
            Ok(Event {
                step: f[0].parse().map_err(|_| bad())?,
                phase,
                task: f[2].parse().map_err(|_| bad())?,
                context: f[3].parse().map_err(|_| bad())?,
                worker: f[4].parse().map_err(|_| bad())?,
                probability: f[5].parse().map_err(|_| bad())?,
                label: label(f[6])?,
                vote: label(f[7])?,
                loss: f[8].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Writes `curve_<strategy>.csv` per strategy, the combined `curves.csv`,
/// the run-level `runs.csv` and (when kept) `events/<strategy>_run<r>.csv`.
/// Returns the written paths.
pub fn write_results(result: &ExperimentResult, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut combined = String::from("strategy,budget,mean_accuracy,stderr,n_failed\n");
    for summary in &result.summaries {
        let mut body = String::from("budget,mean_accuracy,stderr,n_failed\n");
        let mut points = summary.points.clone();
        points.sort_by_key(|p| p.budget);
        for p in &points {
            let row = format!("{},{},{},{}", p.budget, opt(p.mean_accuracy), opt(p.stderr), p.n_failed);
            writeln!(body, "{row}").expect("string write");
            writeln!(combined, "{},{row}", summary.strategy).expect("string write");
        }
        let path = out_dir.join(format!("curve_{}.csv", strategy_file_tag(&summary.strategy)));
        write_file(&path, &body)?;
        written.push(path);
    }
    let path = out_dir.join("curves.csv");
    write_file(&path, &combined)?;
    written.push(path);

    let mut runs = String::from(
        "strategy,run,seed,budget,accuracy,assignment_failure,unlabeled_count,budget_spent,shortfall\n",
    );
    let mut logs = Vec::new();
    for r in &result.runs {
        for &(budget, acc) in &r.accuracy_at {
            writeln!(
                runs,
                "{},{},{},{},{},{},{},{},{}",
                r.strategy,
                r.run,
                r.seed,
                budget,
                acc,
                r.assignment_failure,
                r.unlabeled_count,
                r.budget_spent,
                r.shortfall
            )
            .expect("string write");
        }
        if let Some(events) = &r.events {
            logs.push((format!("{}_run{}.csv", strategy_file_tag(&r.strategy), r.run), events));
        }
    }
    let path = out_dir.join("runs.csv");
    write_file(&path, &runs)?;
    written.push(path);

    if !logs.is_empty() {
        let dir = out_dir.join("events");
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        for (name, events) in logs {
            let path = dir.join(name);
            write_file(&path, &write_event_log(events))?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn write_sweep(rows: &[SweepRow], base: SweepBase, path: &Path) -> Result<(), HarnessError> {
    let mut body = String::from("base,beta,mean_accuracy,stderr,n_failed,n_runs,status\n");
    for r in rows {
        let (mean, se, status) = match r.mean_accuracy {
            None => ("FAILURE".to_string(), "NA".to_string(), "FAILURE"),
            Some(m) => (format_g6(m), opt(r.stderr), if r.flagged() { "flagged" } else { "ok" }),
        };
        writeln!(
            body,
            "{},{},{mean},{se},{},{},{status}",
            base.name(),
            format_g6(r.beta),
            r.n_failed,
            r.n_runs
        )
        .expect("string write");
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    write_file(path, &body)
}

/// Long format: `population,bin,proportion` where `bin` is the upper edge of
/// a 5-point accuracy interval.
pub fn write_histogram(series: &[WorkerAccuracies], path: &Path) -> Result<(), HarnessError> {
    let mut body = String::from("population,bin,proportion\n");
    for s in series {
        for (i, p) in s.histogram().iter().enumerate() {
            writeln!(body, "{},{},{}", s.population, format_g6((i + 1) as f64 * 0.05), format_g6(*p))
                .expect("string write");
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    write_file(path, &body)
}
