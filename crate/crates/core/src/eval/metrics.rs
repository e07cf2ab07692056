//! Binary classification metrics with `ai` as the positive class.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// No positive predictions; precision reported as 0.
    pub precision_undefined: bool,
    /// No positive labels; recall reported as 0.
    pub recall_undefined: bool,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Result<Self> {
        if c.total() == 0 {
            return Err(Error::Empty("metrics over zero predictions".into()));
        }
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let p = ratio(c.tp, c.tp + c.fp);
        let r = ratio(c.tp, c.tp + c.fn_);
        let (precision, recall) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Ok(Metrics {
            accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
            precision,
            recall,
            f1,
            confusion: c,
            precision_undefined: p.is_none(),
            recall_undefined: r.is_none(),
        })
    }
}

pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<Confusion> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (Label::Ai, Label::Ai) => c.tp += 1,
            (Label::Ai, Label::Human) => c.fp += 1,
            (Label::Human, Label::Human) => c.tn += 1,
            (Label::Human, Label::Ai) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn compute_metrics(predictions: &[Label], labels: &[Label]) -> Result<Metrics> {
    Metrics::from_confusion(confusion(predictions, labels)?)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Ai, Human};

    #[test]
    fn worked_confusion() {
        // TP=3, FP=1, FN=1, TN=5
        let pred = [Ai, Ai, Ai, Ai, Human, Human, Human, Human, Human, Human];
        let gold = [Ai, Ai, Ai, Human, Ai, Human, Human, Human, Human, Human];
        let m = compute_metrics(&pred, &gold).unwrap();
        assert_eq!(
            m.confusion,
            Confusion {
                tp: 3,
                fp: 1,
                tn: 5,
                fn_: 1
            }
        );
        assert_eq!(
            (m.precision, m.recall, m.f1, m.accuracy),
            (0.75, 0.75, 0.75, 0.8)
        );
    }

    #[test]
    fn degenerate_cases() {
        let m = compute_metrics(&[Ai, Human], &[Ai, Human]).unwrap();
        assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
        let m = compute_metrics(&[Human, Human], &[Ai, Human]).unwrap();
        assert_eq!(m.recall, 0.0);
        assert!(m.precision_undefined && !m.recall_undefined);
        assert!(compute_metrics(&[Ai], &[Ai, Human]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn sample_stdev() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
