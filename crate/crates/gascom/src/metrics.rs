//! Classification metrics: accuracy, macro-averaged precision/recall/F1 and
//! area under the precision-recall curve (average precision of the positive
//! class, step integration).

use serde::Serialize;

use crate::graph::Label;

#[derive(Debug, Clone, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub pr_auc: f64,
    pub confusion: ConfusionCounts,
    /// Set when a zero-denominator precision/recall term was defined as 0
    /// (single-class splits).
    pub degenerate: bool,
}

/// One scored prediction: predicted label, true label, model probability of
/// the positive class.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub predicted: Label,
    pub actual: Label,
    pub pos_prob: f64,
}

pub fn compute_metrics(preds: &[Prediction]) -> MetricsReport {
    let n = preds.len();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for p in preds {
        match (p.predicted, p.actual) {
            (Label::Pos, Label::Pos) => tp += 1,
            (Label::Pos, Label::Neg) => fp += 1,
            (Label::Neg, Label::Neg) => tn += 1,
            (Label::Neg, Label::Pos) => fn_ += 1,
        }
    }
    let mut degenerate = false;
    let mut ratio = |num: usize, den: usize| -> f64 {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let pos_precision = ratio(tp, tp + fp);
    let pos_recall = ratio(tp, tp + fn_);
    let neg_precision = ratio(tn, tn + fn_);
    let neg_recall = ratio(tn, tn + fp);
    let f1 = |p: f64, r: f64| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    let accuracy = if n == 0 {
        degenerate = true;
        0.0
    } else {
        (tp + tn) as f64 / n as f64
    };
    MetricsReport {
        accuracy,
        macro_f1: (f1(pos_precision, pos_recall) + f1(neg_precision, neg_recall)) / 2.0,
        precision: (pos_precision + neg_precision) / 2.0,
        recall: (pos_recall + neg_recall) / 2.0,
        pr_auc: average_precision(preds),
        confusion: ConfusionCounts { tp, fp, tn, fn_ },
        degenerate,
    }
}

/// Average precision of the positive class: examples ranked by descending
/// positive-class probability (stable on ties), precision accumulated at
/// each positive rank.
pub fn average_precision(preds: &[Prediction]) -> f64 {
    let total_pos = preds.iter().filter(|p| p.actual == Label::Pos).count();
    if total_pos == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .pos_prob
            .partial_cmp(&preds[a].pos_prob)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut tp_so_far = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if preds[i].actual == Label::Pos {
            tp_so_far += 1;
            sum += tp_so_far as f64 / (rank + 1) as f64;
        }
    }
    sum / total_pos as f64
}
