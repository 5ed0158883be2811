//! Independent straight-line reference implementations used only by tests.
//! These deliberately avoid the production matrix helpers: everything is
//! nested-loop arithmetic on plain vectors.

#![doc(hidden)]

use crate::model::ModelParams;
use crate::tensor::Matrix;

type Dense = Vec<Vec<f64>>;

fn to_dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn mul(a: &Dense, b: &Dense) -> Dense {
    let rows = a.len();
    let inner = if rows == 0 { 0 } else { a[0].len() };
    let cols = if b.is_empty() { 0 } else { b[0].len() };
    let mut out = vec![vec![0.0; cols]; rows];
    for i in 0..rows {
        for j in 0..cols {
            let mut s = 0.0;
            for k in 0..inner {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// Straight-line evaluation of one multi-head graph attention call:
/// per-head projections, scaled dot-product softmax, concatenation and
/// output projection.
pub fn dense_mhga_oracle(params: &ModelParams, e_parent: &Matrix, e_i: &Matrix) -> Matrix {
    let heads = params.dims.heads;
    let d_head = params.dims.d_head;
    let ep = to_dense(e_parent);
    let ei = to_dense(e_i);
    let t_p = ep.len();
    let t_k = ei.len();

    let mut concat = vec![vec![0.0; heads * d_head]; t_p];
    for j in 0..heads {
        let wq = to_dense(&params.wq[j]);
        let wk = to_dense(&params.wk[j]);
        let wv = to_dense(&params.wv[j]);
        let q = mul(&ep, &wq);
        let k = mul(&ei, &wk);
        let v = mul(&ei, &wv);
        let scale = 1.0 / (d_head as f64).sqrt();
        for r in 0..t_p {
            // logits, softmax
            let mut logits = vec![0.0; t_k];
            for c in 0..t_k {
                let mut s = 0.0;
                for x in 0..d_head {
                    s += q[r][x] * k[c][x];
                }
                logits[c] = s * scale;
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut weights = vec![0.0; t_k];
            let mut z = 0.0;
            for c in 0..t_k {
                weights[c] = (logits[c] - max).exp();
                z += weights[c];
            }
            for w in &mut weights {
                *w /= z;
            }
            // weighted value sum into the concat slice for this head
            for x in 0..d_head {
                let mut s = 0.0;
                for c in 0..t_k {
                    s += weights[c] * v[c][x];
                }
                concat[r][j * d_head + x] = s;
            }
        }
    }
    let wo = to_dense(&params.wo);
    let o = mul(&concat, &wo);
    Matrix::from_rows(&o)
}

/// Brute-force average precision: rank by score descending (stable on ties),
/// AP = sum over positive ranks of precision-at-that-rank, divided by the
/// number of positives.
pub fn brute_force_average_precision(scores: &[f64], positives: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let total_pos = positives.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, &i) in idx.iter().enumerate() {
        if positives[i] {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    ap / total_pos as f64
}

/// Confusion-matrix metrics computed the long way for cross-checking.
pub struct BruteForceMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn brute_force_metrics(predicted_pos: &[bool], actual_pos: &[bool]) -> BruteForceMetrics {
    let n = predicted_pos.len();
    let mut correct = 0;
    for i in 0..n {
        if predicted_pos[i] == actual_pos[i] {
            correct += 1;
        }
    }
    let per_class = |class_pos: bool| -> (f64, f64, f64) {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for i in 0..n {
            let pred = predicted_pos[i] == class_pos;
            let act = actual_pos[i] == class_pos;
            if pred && act {
                tp += 1.0;
            } else if pred && !act {
                fp += 1.0;
            } else if !pred && act {
                fn_ += 1.0;
            }
        }
        let prec = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
        let rec = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
        let f1 = if prec + rec == 0.0 {
            0.0
        } else {
            2.0 * prec * rec / (prec + rec)
        };
        (prec, rec, f1)
    };
    let (pp, pr, pf) = per_class(true);
    let (np, nr, nf) = per_class(false);
    BruteForceMetrics {
        accuracy: correct as f64 / n as f64,
        macro_f1: (pf + nf) / 2.0,
        precision: (pp + np) / 2.0,
        recall: (pr + nr) / 2.0,
    }
}
