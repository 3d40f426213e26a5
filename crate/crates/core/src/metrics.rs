//! Binary link-inference metrics and classification utility.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// From true positives, predicted positives and actual positives.
    pub fn from_counts(tp: usize, predicted: usize, actual: usize) -> Self {
        debug_assert!(tp <= predicted && tp <= actual);
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
        Self {
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }

    /// Metrics of `predicted` against `truth`; both are treated as sets.
    pub fn of_sets<T: Ord + Clone>(predicted: &[T], truth: &[T]) -> Self {
        let mut p = predicted.to_vec();
        p.sort();
        p.dedup();
        let mut t = truth.to_vec();
        t.sort();
        t.dedup();
        let tp = p.iter().filter(|x| t.binary_search(x).is_ok()).count();
        Self::from_counts(tp, p.len(), t.len())
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Unweighted mean of per-class F1 over `classes` classes. A class absent from
/// both predictions and labels is skipped.
pub fn macro_f1(predicted: &[usize], labels: &[usize], classes: usize) -> f64 {
    assert_eq!(predicted.len(), labels.len());
    let mut sum = 0.0;
    let mut counted = 0;
    for c in 0..classes {
        let tp = predicted
            .iter()
            .zip(labels)
            .filter(|&(&p, &l)| p == c && l == c)
            .count();
        let pred = predicted.iter().filter(|&&p| p == c).count();
        let actual = labels.iter().filter(|&&l| l == c).count();
        if pred == 0 && actual == 0 {
            continue;
        }
        sum += Metrics::from_counts(tp, pred, actual).f1;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        sum / counted as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_examples() {
        let m = Metrics::of_sets(&[1, 2], &[1, 2]);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = Metrics::of_sets::<u32>(&[], &[1]);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let m = Metrics::of_sets(&[1, 2, 3], &[1, 2]);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.recall, 1.0);
        assert!((m.f1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn macro_f1_cases() {
        assert_eq!(macro_f1(&[0, 1, 1, 0], &[0, 1, 1, 0], 2), 1.0);
        assert_eq!(macro_f1(&[1, 1, 1, 1], &[0, 0, 0, 0], 2), 0.0);
        // class 0: p=1, r=0.5, f1=2/3; class 1: p=2/3, r=1, f1=0.8
        let f = macro_f1(&[0, 1, 1, 1], &[0, 0, 1, 1], 2);
        assert!((f - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn random_guessing_on_balanced_classes_is_about_half() {
        use rand::Rng as _;
        let mut r = crate::rng::seeded(8);
        let n = 20_000;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
        assert!((macro_f1(&pred, &labels, 2) - 0.5).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn f1_bounds(tp in 0usize..40, fp in 0usize..40, fneg in 0usize..40) {
            let m = Metrics::from_counts(tp, tp + fp, tp + fneg);
            prop_assert!((0.0..=1.0).contains(&m.f1));
            prop_assert!(m.f1 <= 2.0 * m.precision + 1e-12);
            prop_assert!(m.f1 <= 2.0 * m.recall + 1e-12);
            if m.precision > 0.0 && m.recall > 0.0 {
                let lo = m.precision.min(m.recall);
                let hi = m.precision.max(m.recall);
                prop_assert!(m.f1 >= lo - 1e-12 && m.f1 <= hi + 1e-12);
            } else {
                prop_assert_eq!(m.f1, 0.0);
            }
        }
    }
}
