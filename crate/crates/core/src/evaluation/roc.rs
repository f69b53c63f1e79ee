//! ROC curve sweep and trapezoidal AUC.
//!
//! Thresholds are the distinct scores in descending order plus one sentinel
//! below the minimum; positivity is strict (score > threshold), so the
//! curve always starts at (0,0) and ends at (1,1). The trapezoidal area
//! equals the Mann-Whitney statistic with ties counted one half.

use crate::error::{CadxError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

pub fn roc_and_auc(scores: &[f64], truth: &[bool]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(CadxError::validation("scores/truth length mismatch"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CadxError::numeric("non-finite score"));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CadxError::validation(
            "ROC needs both classes present in the truth labels",
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let p = positives as f64;
    let n = negatives as f64;
    let mut points = Vec::new();
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0usize;
    while i < order.len() {
        let threshold = scores[order[i]];
        // Strict '>' positivity: at this threshold only strictly larger
        // scores (all previous groups) count as positive.
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
        });
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
    }
    let min_score = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    points.push(RocPoint {
        threshold: min_score - 1.0,
        fpr: 1.0,
        tpr: 1.0,
    });

    let mut auc = 0.0;
    for pair in points.windows(2) {
        auc += (pair[1].fpr - pair[0].fpr) * (pair[0].tpr + pair[1].tpr) / 2.0;
    }
    Ok(RocCurve { points, auc })
}
