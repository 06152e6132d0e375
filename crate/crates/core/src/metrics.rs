//! Classification metrics computed from a confusion matrix.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no samples to score")]
    Empty,
    #[error("class index {index} outside {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("prediction and label counts differ: {predictions} vs {labels}")]
    LengthMismatch { predictions: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub per_class: Vec<ClassScores>,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    /// Scores a `C x C` confusion matrix (rows are true classes).
    /// Undefined ratios (zero denominators) count as 0.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let c = confusion.len();
        let total: u64 = confusion.iter().flatten().sum();
        if c == 0 || total == 0 {
            return Err(MetricsError::Empty);
        }
        let mut per_class = Vec::with_capacity(c);
        for k in 0..c {
            let tp = confusion[k][k] as f64;
            let support: u64 = confusion[k].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { tp / support as f64 };
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            per_class.push(ClassScores { precision, recall, f1, support });
        }
        let weighted_f1 = per_class.iter().map(|s| s.support as f64 / total as f64 * s.f1).sum();
        let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / c as f64;
        Ok(Self { per_class, weighted_f1, macro_f1, confusion })
    }

    pub fn from_predictions(predicted: &[usize], actual: &[usize], classes: usize) -> Result<Self, MetricsError> {
        Self::from_confusion(confusion_matrix(predicted, actual, classes)?)
    }

    pub fn total(&self) -> u64 {
        self.per_class.iter().map(|s| s.support).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.confusion.len()).map(|k| self.confusion[k][k]).sum();
        correct as f64 / self.total() as f64
    }
}

pub fn confusion_matrix(predicted: &[usize], actual: &[usize], classes: usize) -> Result<Vec<Vec<u64>>, MetricsError> {
    if predicted.len() != actual.len() {
        return Err(MetricsError::LengthMismatch { predictions: predicted.len(), labels: actual.len() });
    }
    let mut m = vec![vec![0u64; classes]; classes];
    for (&p, &a) in predicted.iter().zip(actual) {
        for index in [p, a] {
            if index >= classes {
                return Err(MetricsError::ClassOutOfRange { index, classes });
            }
        }
        m[a][p] += 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = MetricsReport::from_predictions(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(r.weighted_f1, 1.0);
        assert!(r.per_class.iter().all(|s| s.f1 == 1.0));
    }

    #[test]
    fn single_class_predictions_on_balanced_data() {
        let r = MetricsReport::from_predictions(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert!((r.weighted_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rows_sum_to_supports() {
        let r = MetricsReport::from_predictions(&[0, 2, 1, 1, 0], &[0, 1, 1, 2, 2], 3).unwrap();
        for (row, s) in r.confusion.iter().zip(&r.per_class) {
            assert_eq!(row.iter().sum::<u64>(), s.support);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(MetricsReport::from_predictions(&[], &[], 3), Err(MetricsError::Empty));
        assert!(matches!(confusion_matrix(&[3], &[0], 3), Err(MetricsError::ClassOutOfRange { .. })));
        assert!(matches!(confusion_matrix(&[0], &[], 3), Err(MetricsError::LengthMismatch { .. })));
    }
}
