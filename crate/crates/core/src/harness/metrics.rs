use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};

/// How per-class precision and recall are reduced to one number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    #[default]
    Macro,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    /// True-class counts.
    pub support: Vec<u64>,
}

impl Metrics {
    pub fn total(&self) -> u64 {
        self.support.iter().sum()
    }

    pub fn precision(&self, average: Average) -> f64 {
        match average {
            Average::Macro => self.macro_precision,
            Average::Weighted => self.weighted_precision,
        }
    }

    pub fn recall(&self, average: Average) -> f64 {
        match average {
            Average::Macro => self.macro_recall,
            Average::Weighted => self.weighted_recall,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion matrix and summary scores. Macro averages run over the classes
/// that occur in `truths`; weighted averages weight by their support.
pub fn compute_metrics(truths: &[usize], predictions: &[usize], m: usize) -> Result<Metrics> {
    if truths.len() != predictions.len() {
        return Err(HarnessError::Data(format!(
            "{} truths but {} predictions",
            truths.len(),
            predictions.len()
        )));
    }
    let mut confusion = vec![vec![0u64; m]; m];
    for (&t, &p) in truths.iter().zip(predictions) {
        if t >= m || p >= m {
            return Err(HarnessError::Data(format!(
                "label {} outside {m} classes",
                t.max(p)
            )));
        }
        confusion[t][p] += 1;
    }

    let support: Vec<u64> = confusion.iter().map(|row| row.iter().sum()).collect();
    let predicted: Vec<u64> = (0..m).map(|c| confusion.iter().map(|row| row[c]).sum()).collect();
    let per_class_precision: Vec<f64> = (0..m).map(|c| ratio(confusion[c][c], predicted[c])).collect();
    let per_class_recall: Vec<f64> = (0..m).map(|c| ratio(confusion[c][c], support[c])).collect();

    let total: u64 = support.iter().sum();
    let trace: u64 = (0..m).map(|c| confusion[c][c]).sum();
    let present: Vec<usize> = (0..m).filter(|&c| support[c] > 0).collect();
    let macro_of = |v: &[f64]| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|&c| v[c]).sum::<f64>() / present.len() as f64
        }
    };
    let weighted_of = |v: &[f64]| {
        if total == 0 {
            0.0
        } else {
            (0..m).map(|c| v[c] * support[c] as f64).sum::<f64>() / total as f64
        }
    };

    Ok(Metrics {
        accuracy: ratio(trace, total),
        macro_precision: macro_of(&per_class_precision),
        macro_recall: macro_of(&per_class_recall),
        weighted_precision: weighted_of(&per_class_precision),
        weighted_recall: weighted_of(&per_class_recall),
        per_class_precision,
        per_class_recall,
        support,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn from_confusion(c: &[[usize; 2]; 2]) -> (Vec<usize>, Vec<usize>) {
        let mut t = Vec::new();
        let mut p = Vec::new();
        for (i, row) in c.iter().enumerate() {
            for (j, &n) in row.iter().enumerate() {
                t.extend(std::iter::repeat(i).take(n));
                p.extend(std::iter::repeat(j).take(n));
            }
        }
        (t, p)
    }

    #[test]
    fn perfect() {
        let t = vec![0, 1, 2, 2, 1];
        let m = compute_metrics(&t, &t, 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_precision, 1.0);
        assert_eq!(m.macro_recall, 1.0);
    }

    #[test]
    fn two_class_example() {
        let (t, p) = from_confusion(&[[8, 2], [1, 9]]);
        let m = compute_metrics(&t, &p, 2).unwrap();
        assert_eq!(m.confusion, vec![vec![8, 2], vec![1, 9]]);
        assert_abs_diff_eq!(m.accuracy, 0.85, epsilon = 1e-15);
        assert_abs_diff_eq!(m.per_class_precision[0], 8.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.per_class_precision[1], 9.0 / 11.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.macro_precision, (8.0 / 9.0 + 9.0 / 11.0) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.macro_precision, 0.8535, epsilon = 1e-4);
        assert_abs_diff_eq!(m.macro_recall, 0.85, epsilon = 1e-15);
    }

    #[test]
    fn constant_predictor() {
        let (t, p) = from_confusion(&[[5, 0], [5, 0]]);
        let m = compute_metrics(&t, &p, 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.macro_recall, 0.5);
        assert_eq!(m.macro_precision, 0.25);
    }

    #[test]
    fn absent_classes_do_not_dilute_macro() {
        let m = compute_metrics(&[0, 0, 1], &[0, 0, 1], 5).unwrap();
        assert_eq!(m.macro_recall, 1.0);
        assert_eq!(m.macro_precision, 1.0);
    }

    #[test]
    fn errors() {
        assert!(compute_metrics(&[0, 1], &[0], 2).is_err());
        assert!(compute_metrics(&[0, 2], &[0, 1], 2).is_err());
    }

    proptest! {
        #[test]
        fn recall_weighted_by_frequency_is_accuracy(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)
        ) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let m = compute_metrics(&t, &p, 4).unwrap();
            let total = m.total();
            prop_assert_eq!(total as usize, t.len());
            let trace: u64 = (0..4).map(|c| m.confusion[c][c]).sum();
            prop_assert!((m.accuracy - trace as f64 / total as f64).abs() < 1e-15);
            let dotted: f64 = (0..4)
                .map(|c| m.per_class_recall[c] * m.support[c] as f64 / total as f64)
                .sum();
            prop_assert!((dotted - m.accuracy).abs() < 1e-12);
            prop_assert!((m.weighted_recall - m.accuracy).abs() < 1e-12);
        }
    }
}
