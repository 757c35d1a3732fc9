//! CSV readers for feature tables and real label matrices.

use std::collections::BTreeSet;
use std::path::Path;

use super::HarnessError;
use crate::error::Error;
use crate::simulation::FeatureTable;
use crate::types::{ContextAssignment, GroundTruth, Label, LabelMatrix};

fn read_rows(path: &Path, header: bool) -> Result<Vec<Vec<String>>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| HarnessError::input(path, e))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| HarnessError::input(path, e))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(HarnessError::Input(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn parse_cell<T: std::str::FromStr>(path: &Path, row: usize, col: usize, cell: &str) -> Result<T, HarnessError> {
    cell.parse::<T>().map_err(|_| {
        HarnessError::Input(format!(
            "{}: row {}, column {}: cannot parse {cell:?}",
            path.display(),
            row + 1,
            col + 1
        ))
    })
}

fn parse_label(path: &Path, row: usize, col: usize, cell: &str) -> Result<Label, HarnessError> {
    let v: i64 = parse_cell(path, row, col, cell)?;
    Label::from_value(v).ok_or_else(|| {
        HarnessError::Input(format!(
            "{}: row {}, column {}: label must be -1 or +1, got {v}",
            path.display(),
            row + 1,
            col + 1
        ))
    })
}

/// Reads a feature CSV: numeric feature columns followed by the true label.
pub fn load_features(path: &Path, header: bool) -> Result<(FeatureTable, GroundTruth), HarnessError> {
    let rows = read_rows(path, header)?;
    let width = rows[0].len();
    if width < 2 {
        return Err(HarnessError::Input(format!(
            "{}: need at least one feature column and a label column",
            path.display()
        )));
    }
    let mut values = Vec::with_capacity(rows.len() * (width - 1));
    let mut labels = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(HarnessError::Input(format!(
                "{}: row {} has {} columns, expected {width}",
                path.display(),
                r + 1,
                row.len()
            )));
        }
        for (c, cell) in row[..width - 1].iter().enumerate() {
            values.push(parse_cell::<f64>(path, r, c, cell)?);
        }
        labels.push(parse_label(path, r, width - 1, &row[width - 1])?);
    }
    let table = FeatureTable::new(rows.len(), width - 1, values)?;
    Ok((table, GroundTruth::new(labels)))
}

/// Reads a complete `N x K` matrix of `{-1, +1}`, the true labels (one per
/// line) and, optionally, a context id per task. Context ids may be any
/// integers; they are renumbered densely in ascending order. Without a
/// context file every task shares one context.
pub fn load_label_matrix(
    labels_path: &Path,
    context_path: Option<&Path>,
    truth_path: &Path,
    header: bool,
) -> Result<(LabelMatrix, ContextAssignment, GroundTruth), HarnessError> {
    let rows = read_rows(labels_path, header)?;
    let k = rows[0].len();
    let mut entries = Vec::with_capacity(rows.len() * k);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{}: row {} has {} labels, expected {k}",
                labels_path.display(),
                r + 1,
                row.len()
            ))
            .into());
        }
        for (c, cell) in row.iter().enumerate() {
            let v: i64 = parse_cell(labels_path, r, c, cell)?;
            match v {
                0 => return Err(Error::IncompleteMatrix { task: r, worker: c }.into()),
                -1 | 1 => entries.push(v as i8),
                other => {
                    return Err(Error::LabelOutOfRange { task: r, worker: c, value: other }.into())
                }
            }
        }
    }
    let n = rows.len();
    let matrix = LabelMatrix::from_entries(n, k, entries)?;

    let truth_rows = read_rows(truth_path, header)?;
    if truth_rows.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} truth labels for {n} tasks",
            truth_rows.len()
        ))
        .into());
    }
    let truth = truth_rows
        .iter()
        .enumerate()
        .map(|(r, row)| parse_label(truth_path, r, 0, &row[0]))
        .collect::<Result<Vec<_>, _>>()?;

    let contexts = match context_path {
        None => ContextAssignment::homogeneous(n)?,
        Some(path) => {
            let ctx_rows = read_rows(path, header)?;
            if ctx_rows.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} context ids for {n} tasks",
                    ctx_rows.len()
                ))
                .into());
            }
            let raw = ctx_rows
                .iter()
                .enumerate()
                .map(|(r, row)| parse_cell::<i64>(path, r, 0, &row[0]))
                .collect::<Result<Vec<_>, _>>()?;
            let ids: Vec<i64> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let dense = raw
                .iter()
                .map(|v| ids.binary_search(v).expect("id collected above"))
                .collect();
            ContextAssignment::new(ids.len(), dense)?
        }
    };
    Ok((matrix, contexts, GroundTruth::new(truth)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn features_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "f.csv", "1.0,2.0,1\n3.5,-1,-1\n");
        let (t, y) = load_features(&p, false).unwrap();
        assert_eq!((t.n_tasks(), t.n_features()), (2, 2));
        assert_eq!(y.labels(), &[Label::Positive, Label::Negative]);
        let p = write(dir.path(), "h.csv", "a,b,label\n1.0,2.0,1\n");
        assert_eq!(load_features(&p, true).unwrap().0.n_tasks(), 1);
        assert!(load_features(&p, false).is_err());
    }

    #[test]
    fn homogeneous_when_context_absent() {
        let dir = tempfile::tempdir().unwrap();
        let l = write(dir.path(), "l.csv", "1,-1,1\n-1,-1,1\n");
        let t = write(dir.path(), "t.csv", "1\n-1\n");
        let (m, ctx, truth) = load_label_matrix(&l, None, &t, false).unwrap();
        assert_eq!((m.n_tasks(), m.n_workers()), (2, 3));
        assert_eq!(ctx.n_contexts(), 1);
        assert_eq!(truth.len(), 2);
    }

    #[test]
    fn missing_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let l = write(dir.path(), "l.csv", "1,0\n-1,1\n");
        let t = write(dir.path(), "t.csv", "1\n-1\n");
        let err = load_label_matrix(&l, None, &t, false).unwrap_err();
        assert!(err.to_string().contains("matrix-completion"), "{err}");
    }

    #[test]
    fn two_balanced_contexts() {
        let dir = tempfile::tempdir().unwrap();
        let n = 204;
        let labels: String = (0..n).map(|i| if i % 2 == 0 { "1,1,-1\n" } else { "-1,1,1\n" }).collect();
        let truth: String = (0..n).map(|_| "1\n").collect();
        let ctx: String = (0..n).map(|i| if i < 102 { "1\n" } else { "2\n" }).collect();
        let l = write(dir.path(), "l.csv", &labels);
        let t = write(dir.path(), "t.csv", &truth);
        let c = write(dir.path(), "c.csv", &ctx);
        let (_, ctx, _) = load_label_matrix(&l, Some(&c), &t, false).unwrap();
        assert_eq!(ctx.counts(), vec![102, 102]);
    }

    #[test]
    fn truth_length_checked() {
        let dir = tempfile::tempdir().unwrap();
        let l = write(dir.path(), "l.csv", "1,1\n1,1\n");
        let t = write(dir.path(), "t.csv", "1\n");
        assert!(load_label_matrix(&l, None, &t, false).is_err());
    }
}
