//! SMO solver for the soft-margin SVM dual.
//!
//! Minimizes f(a) = 1/2 a'Qa - e'a with Q_ij = y_i y_j K_ij subject to
//! 0 <= a_i <= C and y'a = 0, by repeatedly optimizing the maximal
//! violating pair (first-order working-set selection) against a
//! precomputed Gram matrix. Convergence is declared when the KKT violation
//! m(a) - M(a) drops below the tolerance.

const TAU: f64 = 1e-12;

pub(crate) struct BinaryProblem<'a> {
    /// Row-major n x n kernel matrix.
    pub gram: &'a [f64],
    /// Labels in {-1.0, +1.0}.
    pub labels: &'a [f64],
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct BinarySolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    #[allow(dead_code)] // solver diagnostics, read by the test suite
    pub iterations: usize,
    #[allow(dead_code)]
    pub converged: bool,
}

impl BinarySolution {
    /// Dual objective in max form: sum(a) - 1/2 a'Qa.
    pub fn dual_objective(&self, gram: &[f64], labels: &[f64]) -> f64 {
        dual_objective(&self.alpha, gram, labels)
    }
}

pub(crate) fn dual_objective(alpha: &[f64], gram: &[f64], labels: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * labels[i] * labels[j] * gram[i * n + j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

pub(crate) fn solve_binary(p: &BinaryProblem<'_>) -> BinarySolution {
    let n = p.labels.len();
    let q = |i: usize, j: usize| p.labels[i] * p.labels[j] * p.gram[i * n + j];

    let mut alpha = vec![0.0f64; n];
    // G_i = (Qa)_i - 1; starts at -1 with a = 0.
    let mut grad = vec![-1.0f64; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < p.max_iterations {
        // Maximal violating pair over -y_t G_t.
        let mut i_best: Option<usize> = None;
        let mut m_val = f64::NEG_INFINITY;
        let mut j_best: Option<usize> = None;
        let mut m_low = f64::INFINITY;
        for t in 0..n {
            let v = -p.labels[t] * grad[t];
            let in_up = (p.labels[t] > 0.0 && alpha[t] < p.c)
                || (p.labels[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (p.labels[t] > 0.0 && alpha[t] > 0.0)
                || (p.labels[t] < 0.0 && alpha[t] < p.c);
            if in_up && v > m_val {
                m_val = v;
                i_best = Some(t);
            }
            if in_low && v < m_low {
                m_low = v;
                j_best = Some(t);
            }
        }
        let (i, j) = match (i_best, j_best) {
            (Some(i), Some(j)) => (i, j),
            _ => break,
        };
        if m_val - m_low <= p.tolerance {
            converged = true;
            break;
        }

        let old_i = alpha[i];
        let old_j = alpha[j];
        if p.labels[i] != p.labels[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > p.c {
                    alpha[i] = p.c;
                    alpha[j] = p.c - diff;
                }
            } else if alpha[j] > p.c {
                alpha[j] = p.c;
                alpha[i] = p.c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > p.c {
                if alpha[i] > p.c {
                    alpha[i] = p.c;
                    alpha[j] = sum - p.c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > p.c {
                if alpha[j] > p.c {
                    alpha[j] = p.c;
                    alpha[i] = sum - p.c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        if di != 0.0 || dj != 0.0 {
            for (t, g) in grad.iter_mut().enumerate() {
                *g += q(t, i) * di + q(t, j) * dj;
            }
        }
        iterations += 1;
    }

    let bias = compute_bias(&alpha, &grad, p);
    BinarySolution {
        alpha,
        bias,
        iterations,
        converged,
    }
}

/// At the optimum, -y_i G_i equals the bias for every free support vector;
/// with no free vectors the bias sits in the middle of the feasible range.
fn compute_bias(alpha: &[f64], grad: &[f64], p: &BinaryProblem<'_>) -> f64 {
    let n = alpha.len();
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    for t in 0..n {
        let v = -p.labels[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < p.c {
            free_sum += v;
            free_count += 1;
        }
        let in_up = (p.labels[t] > 0.0 && alpha[t] < p.c) || (p.labels[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (p.labels[t] > 0.0 && alpha[t] > 0.0) || (p.labels[t] < 0.0 && alpha[t] < p.c);
        if in_up {
            upper = upper.min(v);
        }
        if in_low {
            lower = lower.max(v);
        }
    }
    if free_count > 0 {
        free_sum / free_count as f64
    } else if upper.is_finite() && lower.is_finite() {
        (upper + lower) / 2.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_gram(points: &[Vec<f64>]) -> Vec<f64> {
        let n = points.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = points[i]
                    .iter()
                    .zip(points[j].iter())
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
        gram
    }

    #[test]
    fn two_point_analytic_solution() {
        // Points x = -1 (label -1) and x = +1 (label +1), linear kernel,
        // C = 10: the dual 2a - 2a^2 peaks at a = 0.5, w = 1, b = 0.
        let points = vec![vec![-1.0], vec![1.0]];
        let labels = vec![-1.0, 1.0];
        let gram = linear_gram(&points);
        let sol = solve_binary(&BinaryProblem {
            gram: &gram,
            labels: &labels,
            c: 10.0,
            tolerance: 1e-9,
            max_iterations: 1000,
        });
        assert!((sol.alpha[0] - 0.5).abs() <= 1e-9, "alpha {:?}", sol.alpha);
        assert!((sol.alpha[1] - 0.5).abs() <= 1e-9);
        assert!(sol.bias.abs() <= 1e-9, "bias {}", sol.bias);
        assert!((sol.dual_objective(&gram, &labels) - 0.5).abs() < 1e-12);
        // Decision function f(x) = x: w = sum a_i y_i x_i = 1.
        let w: f64 = sol
            .alpha
            .iter()
            .zip(labels.iter())
            .zip(points.iter())
            .map(|((a, y), x)| a * y * x[0])
            .sum();
        assert!((w - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_constraint_holds() {
        let points = vec![
            vec![0.0, 1.0],
            vec![0.2, 0.9],
            vec![1.0, 0.1],
            vec![0.9, -0.2],
            vec![0.4, 0.4],
        ];
        let labels = vec![1.0, 1.0, -1.0, -1.0, -1.0];
        let gram = linear_gram(&points);
        let sol = solve_binary(&BinaryProblem {
            gram: &gram,
            labels: &labels,
            c: 1.0,
            tolerance: 1e-6,
            max_iterations: 100_000,
        });
        let balance: f64 = sol
            .alpha
            .iter()
            .zip(labels.iter())
            .map(|(a, y)| a * y)
            .sum();
        assert!(balance.abs() <= 1e-9, "sum alpha*y = {balance}");
        assert!(sol.alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
        assert!(sol.converged);
    }

    #[test]
    fn kkt_conditions_at_convergence() {
        let points = vec![
            vec![-2.0],
            vec![-1.0],
            vec![-0.1],
            vec![0.1],
            vec![1.0],
            vec![2.0],
        ];
        let labels = vec![-1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        let gram = linear_gram(&points);
        let c = 5.0;
        let tol = 1e-8;
        let sol = solve_binary(&BinaryProblem {
            gram: &gram,
            labels: &labels,
            c,
            tolerance: tol,
            max_iterations: 1_000_000,
        });
        assert!(sol.converged);
        let n = labels.len();
        for i in 0..n {
            let f_i: f64 = (0..n)
                .map(|j| sol.alpha[j] * labels[j] * gram[i * n + j])
                .sum::<f64>()
                + sol.bias;
            let margin = labels[i] * f_i;
            let kkt_tol = 1e-6;
            if sol.alpha[i] <= 1e-12 {
                assert!(margin >= 1.0 - kkt_tol, "a=0 sample {i} margin {margin}");
            } else if sol.alpha[i] >= c - 1e-12 {
                assert!(margin <= 1.0 + kkt_tol, "a=C sample {i} margin {margin}");
            } else {
                assert!(
                    (margin - 1.0).abs() <= kkt_tol,
                    "free sample {i} margin {margin}"
                );
            }
        }
    }
}
