//! Platt sigmoid calibration: fits P(target | s) = 1 / (1 + exp(A*s + B))
//! by regularized maximum likelihood with Newton steps and backtracking
//! (the robust variant of Lin, Weng and Keerthi).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn probability(&self, score: f64) -> f64 {
        let f = self.a * score + self.b;
        // Evaluate the stable branch to avoid overflow.
        if f >= 0.0 {
            let e = (-f).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + f.exp())
        }
    }
}

pub fn fit_platt(scores: &[f64], targets: &[bool]) -> PlattParams {
    debug_assert_eq!(scores.len(), targets.len());
    let n = scores.len();
    let prior1 = targets.iter().filter(|&&t| t).count() as f64;
    let prior0 = n as f64 - prior1;

    let hi_t = (prior1 + 1.0) / (prior1 + 2.0);
    let lo_t = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = targets
        .iter()
        .map(|&is_pos| if is_pos { hi_t } else { lo_t })
        .collect();

    let max_iter = 100;
    let min_step = 1e-10;
    let sigma = 1e-12;

    let mut a = 0.0f64;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();

    let fval = |a: f64, b: f64| -> f64 {
        let mut v = 0.0;
        for i in 0..n {
            let f = a * scores[i] + b;
            if f >= 0.0 {
                v += t[i] * f + (1.0 + (-f).exp()).ln();
            } else {
                v += (t[i] - 1.0) * f + (1.0 + f.exp()).ln();
            }
        }
        v
    };
    let mut f_current = fval(a, b);

    for _ in 0..max_iter {
        // Gradient and Hessian of the negative log-likelihood.
        let (mut h11, mut h22, mut h21) = (sigma, sigma, 0.0);
        let (mut g1, mut g2) = (0.0, 0.0);
        for i in 0..n {
            let f = a * scores[i] + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += scores[i] * scores[i] * d2;
            h22 += d2;
            h21 += scores[i] * d2;
            let d1 = t[i] - p;
            g1 += scores[i] * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        // Newton direction via the 2x2 inverse.
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;

        let mut step = 1.0;
        let mut advanced = false;
        while step >= min_step {
            let na = a + step * da;
            let nb = b + step * db;
            let f_new = fval(na, nb);
            if f_new < f_current + 1e-4 * step * gd {
                a = na;
                b = nb;
                f_current = f_new;
                advanced = true;
                break;
            }
            step /= 2.0;
        }
        if !advanced {
            break;
        }
    }
    PlattParams { a, b }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_scores_give_centered_sigmoid() {
        let scores = [-1.0, 1.0];
        let targets = [false, true];
        let p = fit_platt(&scores, &targets);
        assert!(p.b.abs() < 1e-6, "B should be ~0 by symmetry, got {}", p.b);
        assert!((p.probability(0.0) - 0.5).abs() < 1e-6);
        assert!(p.a < 0.0, "slope orientation: larger score => larger probability");
    }

    #[test]
    fn saturates_far_from_the_boundary() {
        let scores = [-2.0, -1.5, -1.0, 1.0, 1.5, 2.0];
        let targets = [false, false, false, true, true, true];
        let p = fit_platt(&scores, &targets);
        assert!(p.probability(100.0) > 0.99);
        assert!(p.probability(-100.0) < 0.01);
    }

    #[test]
    fn probability_monotone_in_score() {
        let scores = [-2.0, -0.5, 0.1, 0.4, 1.7];
        let targets = [false, false, true, true, true];
        let p = fit_platt(&scores, &targets);
        let mut last = 0.0;
        for s in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let v = p.probability(s);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn constant_scores_do_not_blow_up() {
        let scores = [0.5; 6];
        let targets = [true, false, true, false, true, false];
        let p = fit_platt(&scores, &targets);
        let v = p.probability(0.5);
        assert!(v.is_finite() && v > 0.0 && v < 1.0);
    }
}
