//! Label aggregation: weighted and majority votes, positive/negative scores
//! and the two confidence functions derived from them.
//!
//! Everything here is stateless. The caller owns the tie-break randomness.

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::Label;

/// Weight fractions supporting `+1` and `-1` for one task.
///
/// Both are normalised by the total weight of *all* workers, so
/// `positive + negative < 1` whenever some labels are missing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TaskScores {
    pub positive: f64,
    pub negative: f64,
}

impl TaskScores {
    /// Least-confidence score: weight of the more probable label.
    pub fn least_confidence(&self) -> f64 {
        confidence_lc(*self)
    }

    /// Margin score `|positive - negative|`.
    pub fn margin(&self) -> f64 {
        confidence_ms(*self)
    }
}

fn check_weights(labels_row: &[i8], weights: &[f64]) -> Result<f64> {
    if labels_row.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels but {} weights",
            labels_row.len(),
            weights.len()
        )));
    }
    if weights.is_empty() {
        return Err(Error::InvalidParameter("at least one worker is required".into()));
    }
    let mut total = 0.0;
    for (worker, &w) in weights.iter().enumerate() {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidWeight { worker, weight: w });
        }
        total += w;
    }
    Ok(total)
}

/// `sign(sum_j w_j y_j / sum_j w_j)`; a zero sum is broken uniformly at
/// random with `tie_break`.
pub fn weighted_vote<R: Rng + ?Sized>(
    labels_row: &[i8],
    weights: &[f64],
    tie_break: &mut R,
) -> Result<Label> {
    let total = check_weights(labels_row, weights)?;
    Ok(vote_unchecked(labels_row, weights, total, tie_break))
}

pub(crate) fn vote_unchecked<R: Rng + ?Sized>(
    labels_row: &[i8],
    weights: &[f64],
    total: f64,
    tie_break: &mut R,
) -> Label {
    let signed: f64 = labels_row
        .iter()
        .zip(weights)
        .map(|(&y, &w)| w * f64::from(y))
        .sum();
    let normalised = signed / total;
    if normalised > 0.0 {
        Label::Positive
    } else if normalised < 0.0 {
        Label::Negative
    } else if tie_break.gen_bool(0.5) {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// Equal-weight vote.
pub fn majority_vote<R: Rng + ?Sized>(labels_row: &[i8], tie_break: &mut R) -> Result<Label> {
    if labels_row.is_empty() {
        return Err(Error::InvalidParameter("at least one worker is required".into()));
    }
    let ones = vec![1.0; labels_row.len()];
    Ok(vote_unchecked(labels_row, &ones, labels_row.len() as f64, tie_break))
}

pub fn task_scores(labels_row: &[i8], weights: &[f64]) -> Result<TaskScores> {
    let total = check_weights(labels_row, weights)?;
    Ok(scores_unchecked(labels_row, weights, total))
}

pub(crate) fn scores_unchecked(labels_row: &[i8], weights: &[f64], total: f64) -> TaskScores {
    let mut positive = 0.0;
    let mut negative = 0.0;
    for (&y, &w) in labels_row.iter().zip(weights) {
        match y {
            1 => positive += w,
            -1 => negative += w,
            _ => {}
        }
    }
    TaskScores {
        positive: positive / total,
        negative: negative / total,
    }
}

pub fn confidence_lc(scores: TaskScores) -> f64 {
    scores.positive.max(scores.negative)
}

pub fn confidence_ms(scores: TaskScores) -> f64 {
    (scores.positive - scores.negative).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn weighted_vote_examples() {
        let mut r = rng();
        assert_eq!(weighted_vote(&[1, 1, -1], &[1.0; 3], &mut r).unwrap(), Label::Positive);
        assert_eq!(
            weighted_vote(&[1, -1, 0], &[0.5, 2.0, 1.0], &mut r).unwrap(),
            Label::Negative
        );
    }

    #[test]
    fn ties_split_evenly() {
        let mut r = rng();
        let n = 10_000;
        let positives = (0..n)
            .filter(|_| weighted_vote(&[1, -1], &[1.0, 1.0], &mut r).unwrap() == Label::Positive)
            .count();
        // 4 sigma of a fair binomial
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((positives as f64 - n as f64 / 2.0).abs() < 4.0 * sigma, "{positives}");
    }

    #[test]
    fn majority_vote_examples() {
        let mut r = rng();
        assert_eq!(majority_vote(&[1, 1, 1], &mut r).unwrap(), Label::Positive);
        assert_eq!(majority_vote(&[1, -1, -1], &mut r).unwrap(), Label::Negative);
        let mut seen = [false; 2];
        for _ in 0..64 {
            match majority_vote(&[0, 0, 0], &mut r).unwrap() {
                Label::Positive => seen[0] = true,
                Label::Negative => seen[1] = true,
            }
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn bad_weights_rejected() {
        let mut r = rng();
        assert!(matches!(
            weighted_vote(&[1, 1], &[1.0, 0.0], &mut r),
            Err(Error::InvalidWeight { worker: 1, .. })
        ));
        assert!(matches!(
            task_scores(&[1], &[f64::NAN]),
            Err(Error::InvalidWeight { worker: 0, .. })
        ));
        assert!(matches!(task_scores(&[1], &[-2.0]), Err(Error::InvalidWeight { .. })));
    }

    #[test]
    fn score_examples() {
        let s = task_scores(&[1, 1, -1, 0], &[1.0; 4]).unwrap();
        assert_eq!(s, TaskScores { positive: 0.5, negative: 0.25 });
        assert_eq!(task_scores(&[0, 0, 0], &[1.0, 2.0, 3.0]).unwrap(), TaskScores::default());
        let s = task_scores(&[1, 1, 1], &[0.3, 2.0, 7.5]).unwrap();
        assert_abs_diff_eq!(s.positive, 1.0, epsilon = 1e-15);
        assert_eq!(s.negative, 0.0);
    }

    #[test]
    fn confidence_examples() {
        let s = |p, n| TaskScores { positive: p, negative: n };
        assert_eq!(confidence_lc(s(0.5, 0.25)), 0.5);
        assert_eq!(confidence_lc(s(0.0, 0.0)), 0.0);
        assert_eq!(confidence_lc(s(0.3, 0.7)), 0.7);
        assert_eq!(confidence_ms(s(0.5, 0.25)), 0.25);
        assert_eq!(confidence_ms(s(0.4, 0.4)), 0.0);
        assert_eq!(confidence_ms(s(1.0, 0.0)), 1.0);
    }

    fn instance() -> impl Strategy<Value = (Vec<i8>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|k| {
            (
                prop::collection::vec(-1i8..=1, k),
                prop::collection::vec(1e-6f64..1e3, k),
            )
        })
    }

    proptest! {
        #[test]
        fn margin_matches_normalised_sum((labels, weights) in instance()) {
            let s = task_scores(&labels, &weights).unwrap();
            let signed: f64 = labels.iter().zip(&weights).map(|(&y, &w)| w * f64::from(y)).sum();
            let total: f64 = weights.iter().sum();
            prop_assert!((confidence_ms(s) - (signed / total).abs()).abs() <= 1e-12);
        }

        #[test]
        fn scores_are_scale_invariant((labels, weights) in instance(), c in 1e-3f64..1e3) {
            let scaled: Vec<f64> = weights.iter().map(|w| w * c).collect();
            let a = task_scores(&labels, &weights).unwrap();
            let b = task_scores(&labels, &scaled).unwrap();
            prop_assert!((a.positive - b.positive).abs() <= 1e-12);
            prop_assert!((a.negative - b.negative).abs() <= 1e-12);
            prop_assert!((confidence_lc(a) - confidence_lc(b)).abs() <= 1e-12);
            prop_assert!((confidence_ms(a) - confidence_ms(b)).abs() <= 1e-12);
            if (a.positive - a.negative).abs() > 1e-9 {
                let mut r = rng();
                prop_assert_eq!(
                    weighted_vote(&labels, &weights, &mut r).unwrap(),
                    weighted_vote(&labels, &scaled, &mut r).unwrap()
                );
            }
        }

        #[test]
        fn vote_agrees_with_scores((labels, weights) in instance()) {
            let s = task_scores(&labels, &weights).unwrap();
            prop_assert!(s.positive >= 0.0 && s.negative >= 0.0);
            prop_assert!(s.positive + s.negative <= 1.0 + 1e-12);
            if (s.positive - s.negative).abs() > 1e-9 {
                let mut r = rng();
                let vote = weighted_vote(&labels, &weights, &mut r).unwrap();
                prop_assert_eq!(vote == Label::Positive, s.positive > s.negative);
            }
        }

        #[test]
        fn lc_dominates_ms((labels, weights) in instance()) {
            let s = task_scores(&labels, &weights).unwrap();
            prop_assert!(confidence_lc(s) >= confidence_ms(s));
            let one_sided = s.positive.min(s.negative) == 0.0;
            prop_assert_eq!(one_sided, confidence_lc(s) == confidence_ms(s));
        }
    }
}
