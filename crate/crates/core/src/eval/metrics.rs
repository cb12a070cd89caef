use serde::{Deserialize, Serialize};

use super::EvalError;

/// `k × k` counts, rows are true classes and columns predicted ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Self, EvalError> {
        if y_true.len() != y_pred.len() {
            return Err(EvalError::LengthMismatch {
                truth: y_true.len(),
                predicted: y_pred.len(),
            });
        }
        let mut counts = vec![0u64; k * k];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t >= k || p >= k {
                return Err(EvalError::LabelOutOfRange { label: t.max(p), k });
            }
            counts[t * k + p] += 1;
        }
        Ok(ConfusionMatrix { k, counts })
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.k).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, class)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class scores plus support-weighted means. A 0/0 ratio counts as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn compute_metrics(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<MetricsReport, EvalError> {
    let cm = ConfusionMatrix::new(y_true, y_pred, k)?;
    let n = cm.total() as f64;
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let support = cm.support(c);
            let precision = ratio(tp, cm.predicted(c) as f64);
            let recall = ratio(tp, support as f64);
            ClassMetrics {
                precision,
                recall,
                f1: ratio(2.0 * precision * recall, precision + recall),
                support,
            }
        })
        .collect();
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        ratio(per_class.iter().map(|m| m.support as f64 * f(m)).sum(), n)
    };
    Ok(MetricsReport {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
        accuracy: ratio((0..k).map(|c| cm.get(c, c) as f64).sum(), n),
        per_class,
        confusion: cm,
    })
}

/// Weighted F1 only.
pub fn weighted_f1(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<f64, EvalError> {
    Ok(compute_metrics(y_true, y_pred, k)?.f1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1, 0];
        let m = compute_metrics(&y, &y, 3).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_example() {
        let m = compute_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        let a = m.per_class[0];
        let b = m.per_class[1];
        assert_eq!((a.precision, a.recall), (1.0, 0.5));
        assert!((a.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((b.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(b.recall, 1.0);
        assert!((b.f1 - 0.8).abs() < 1e-12);
        assert!((m.precision - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(m.recall, 0.75);
        assert!((m.f1 - 11.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn never_predicted_class_scores_zero() {
        let m = compute_metrics(&[0, 1, 1], &[1, 1, 1], 2).unwrap();
        assert_eq!(m.per_class[0].precision, 0.0);
        assert_eq!(m.per_class[0].f1, 0.0);
    }

    #[test]
    fn equal_support_weighted_is_macro() {
        let t = [0, 0, 1, 1, 2, 2];
        let p = [0, 1, 1, 2, 2, 0];
        let m = compute_metrics(&t, &p, 3).unwrap();
        let macro_f1 = m.per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0;
        assert!((m.f1 - macro_f1).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            compute_metrics(&[0, 1], &[0], 2),
            Err(EvalError::LengthMismatch { truth: 2, predicted: 1 })
        ));
        assert!(matches!(
            compute_metrics(&[0, 3], &[0, 1], 2),
            Err(EvalError::LabelOutOfRange { label: 3, k: 2 })
        ));
    }
}
