//! Binary counts, the accuracy/sensitivity/specificity trio, and confusion
//! matrices.

use crate::error::{CadxError, Result};
use serde::{Deserialize, Serialize};

/// Positive = high risk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(CadxError::validation("accuracy undefined: no samples"));
        }
        Ok((self.tp + self.tn) as f64 / total as f64)
    }

    pub fn sensitivity(&self) -> Result<f64> {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            return Err(CadxError::validation(
                "sensitivity undefined: no actual positives",
            ));
        }
        Ok(self.tp as f64 / denom as f64)
    }

    pub fn specificity(&self) -> Result<f64> {
        let denom = self.tn + self.fp;
        if denom == 0 {
            return Err(CadxError::validation(
                "specificity undefined: no actual negatives",
            ));
        }
        Ok(self.tn as f64 / denom as f64)
    }

    pub fn add(&mut self, other: &BinaryCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Row = actual class, column = predicted class, counts plus a
/// row-normalized view for display.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    /// Row-major k x k counts.
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_labels(actual: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
        if actual.len() != predicted.len() {
            return Err(CadxError::validation(
                "actual/predicted label lists differ in length",
            ));
        }
        if actual.is_empty() {
            return Err(CadxError::validation("empty label lists"));
        }
        let mut m = ConfusionMatrix::zeros(k);
        for (&a, &p) in actual.iter().zip(predicted.iter()) {
            if a >= k || p >= k {
                return Err(CadxError::validation(format!(
                    "label out of range: actual {a}, predicted {p}, k = {k}"
                )));
            }
            m.counts[a * k + p] += 1;
        }
        Ok(m)
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    /// Rows divided by their sums; empty rows stay all zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|r| {
                let row = &self.counts[r * self.k..(r + 1) * self.k];
                let sum: u64 = row.iter().sum();
                if sum == 0 {
                    vec![0.0; self.k]
                } else {
                    row.iter().map(|&c| c as f64 / sum as f64).collect()
                }
            })
            .collect()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        debug_assert_eq!(self.k, other.k);
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
    }
}
