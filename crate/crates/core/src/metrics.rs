//! Classification metrics and seed aggregation.

use crate::error::{QmoeError, Result};

/// Accuracy and the F1 score of class 1. F1 is 0 when precision + recall is 0.
pub fn compute_metrics(predictions: &[usize], labels: &[usize]) -> Result<(f64, f64)> {
    if predictions.is_empty() {
        return Err(QmoeError::InvalidArgument(
            "metrics need at least one prediction".into(),
        ));
    }
    if predictions.len() != labels.len() {
        return Err(QmoeError::DimensionMismatch {
            expected: labels.len(),
            actual: predictions.len(),
            context: "predictions vs labels",
        });
    }
    let (mut correct, mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in predictions.iter().zip(labels) {
        correct += usize::from(p == y);
        match (p == 1, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let accuracy = correct as f64 / predictions.len() as f64;
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fneg > 0 {
        tp as f64 / (tp + fneg) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((accuracy, f1))
}

/// Median; the mean of the two middle values for even counts. NaN for empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn examples() {
        assert_eq!(compute_metrics(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), (1.0, 1.0));
        assert_eq!(compute_metrics(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(), (0.5, 0.0));
        let (acc, f1) = compute_metrics(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap();
        assert_eq!(acc, 0.75);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    proptest! {
        #[test]
        fn metrics_in_unit_interval(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..50)) {
            let (p, y): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let (acc, f1) = compute_metrics(&p, &y).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert!((0.0..=1.0).contains(&f1));
        }
    }
}
