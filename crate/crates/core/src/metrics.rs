//! Threshold-free ranking metrics for binary scores.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub ap: f64,
    pub acc_at_half: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_labels(scores: &[f64], labels: &[f64]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "metrics",
            format!("{} scores vs {} labels", scores.len(), labels.len()),
        ));
    }
    let mut pos = 0;
    let mut neg = 0;
    for &y in labels {
        if y == 1.0 {
            pos += 1;
        } else if y == 0.0 {
            neg += 1;
        } else {
            return Err(Error::InvalidLabel(y));
        }
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    Ok((pos, neg))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from mid-ranks in `O(N log N)`.
pub fn auc_exact(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (n_pos, n_neg) = check_labels(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateBatch(format!(
            "AUC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // Sum of positive mid-ranks (1-based).
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let group_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1.0).count();
        rank_sum += mid * group_pos as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean over positives of precision at that positive's rank, ranking by score
/// descending with ties broken by original index.
pub fn average_precision(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (n_pos, _) = check_labels(scores, labels)?;
    if n_pos == 0 {
        return Err(Error::DegenerateBatch("average precision needs a positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if labels[k] == 1.0 {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / n_pos as f64)
}

/// Fraction of samples where `score >= threshold` agrees with the label.
pub fn accuracy_at(scores: &[f64], labels: &[f64], threshold: f64) -> Result<f64> {
    check_labels(scores, labels)?;
    if scores.is_empty() {
        return Ok(0.0);
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (s >= threshold) == (y == 1.0))
        .count();
    Ok(correct as f64 / scores.len() as f64)
}

pub fn evaluate_scores(scores: &[f64], labels: &[f64]) -> Result<EvalReport> {
    let (n_pos, n_neg) = check_labels(scores, labels)?;
    Ok(EvalReport {
        auc: auc_exact(scores, labels)?,
        ap: average_precision(scores, labels)?,
        acc_at_half: accuracy_at(scores, labels, 0.5)?,
        n_pos,
        n_neg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1.0 && labels[j] == 0.0 {
                    pairs += 1.0;
                    acc += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        acc / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_exact(&[0.9, 0.8, 0.2, 0.1], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(auc_exact(&[0.3; 5], &[1.0, 0.0, 1.0, 0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(auc_exact(&[0.9, 0.8, 0.85, 0.1], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 0.75);
        assert!(matches!(auc_exact(&[0.1, 0.2], &[1.0, 1.0]), Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[1.0, 1.0, 0.0]).unwrap(), 1.0);
        let ap = average_precision(&[0.9, 0.5, 0.1], &[1.0, 0.0, 1.0]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.1], &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(ap, 0.25);
        // tie broken by index: positive at index 1 ranks second
        let ap = average_precision(&[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert_eq!(ap, 0.5);
        assert!(average_precision(&[0.5], &[0.0]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let labels = [1.0, 0.0, 1.0, 0.0];
        assert_eq!(accuracy_at(&[0.9, 0.1, 0.8, 0.2], &labels, 0.5).unwrap(), 1.0);
        assert_eq!(accuracy_at(&[0.1, 0.9, 0.2, 0.8], &labels, 0.5).unwrap(), 0.0);
        assert_eq!(accuracy_at(&[0.5; 4], &[1.0, 0.0, 0.0, 0.0], 0.5).unwrap(), 0.25);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..64).prop_flat_map(|n| {
            (
                prop::collection::vec(0u8..20, n),
                prop::collection::vec(prop::bool::ANY, n),
            )
                .prop_map(|(s, y)| {
                    let mut labels: Vec<f64> = y.into_iter().map(|b| b as u8 as f64).collect();
                    labels[0] = 1.0;
                    labels[1] = 0.0;
                    (s.into_iter().map(|v| v as f64 / 20.0).collect(), labels)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn rank_auc_equals_pair_count((s, y) in instance()) {
            prop_assert_eq!(auc_exact(&s, &y).unwrap(), brute_auc(&s, &y));
        }

        #[test]
        fn auc_monotone_invariance((s, y) in instance()) {
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(auc_exact(&s, &y).unwrap(), auc_exact(&t, &y).unwrap());
        }

        #[test]
        fn auc_negation_without_ties(perm in Just((0..40).collect::<Vec<usize>>()).prop_shuffle(), y in prop::collection::vec(prop::bool::ANY, 40)) {
            let s: Vec<f64> = perm.iter().map(|&v| v as f64 * 0.01).collect();
            let mut labels: Vec<f64> = y.into_iter().map(|b| b as u8 as f64).collect();
            labels[0] = 1.0;
            labels[1] = 0.0;
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let a = auc_exact(&s, &labels).unwrap();
            let b = auc_exact(&neg, &labels).unwrap();
            prop_assert!((a - (1.0 - b)).abs() < 1e-12);
        }
    }
}
