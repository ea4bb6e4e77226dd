//! Evaluation against gold labels.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub examples: usize,
    /// Predictions that were `None` (no decision possible).
    pub unlabeled: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
}

/// Micro-averaged accuracy and macro-averaged F1.
///
/// A `None` prediction counts as wrong. Macro F1 is the unweighted mean of
/// per-class F1 over all `k` classes; a class with no true positives, false
/// positives or false negatives scores 0.
pub fn evaluate(pred: &[Option<usize>], gold: &[usize], k: usize) -> EvalReport {
    assert_eq!(pred.len(), gold.len(), "prediction and gold lengths differ");
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    let mut correct = 0;
    for (&p, &g) in pred.iter().zip(gold) {
        match p {
            Some(p) if p == g => {
                correct += 1;
                tp[g] += 1;
            }
            Some(p) => {
                fp[p] += 1;
                fn_[g] += 1;
            }
            None => fn_[g] += 1,
        }
    }
    let per_class_f1: Vec<f64> = (0..k)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    let macro_f1 = if k == 0 { 0.0 } else { per_class_f1.iter().sum::<f64>() / k as f64 };
    EvalReport {
        examples: gold.len(),
        unlabeled: pred.iter().filter(|p| p.is_none()).count(),
        accuracy: if gold.is_empty() { 0.0 } else { correct as f64 / gold.len() as f64 },
        macro_f1,
        per_class_f1,
    }
}
