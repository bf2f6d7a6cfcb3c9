//! Frame-level binary classification metrics for segmentation tasks.

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl FrameMetrics {
    /// Percent with one decimal, the table convention.
    pub fn render(&self) -> String {
        format!(
            "acc {:.1}\tf1 {:.1}\tprec {:.1}\trec {:.1}",
            100.0 * self.accuracy,
            100.0 * self.f1,
            100.0 * self.precision,
            100.0 * self.recall
        )
    }
}

/// Accuracy, precision, recall and F1 of `pred` against `gold`, with `true`
/// as the positive class. Precision/recall/F1 are 0 when undefined.
pub fn frame_metrics(pred: &[bool], gold: &[bool]) -> Result<FrameMetrics, MetricsError> {
    if pred.len() != gold.len() {
        return Err(MetricsError::LengthMismatch { pred: pred.len(), gold: gold.len() });
    }
    if pred.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    for (&p, &g) in pred.iter().zip(gold) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(FrameMetrics {
        accuracy: (tp + tn) as f64 / pred.len() as f64,
        precision,
        recall,
        f1,
    })
}
