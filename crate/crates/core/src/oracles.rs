//! Independent reference implementations used only by the test and
//! acceptance suites. Each oracle recomputes a quantity by a different
//! route than the production code (brute-force enumeration, direct
//! summation, finite differences) and must stay decoupled from the
//! implementation it checks.
#![doc(hidden)]

use crate::dataset::{FineClass, Frame2D};
use crate::neuralnet::{forward, CnnModel};

/// Mean softmax cross-entropy computed from forward passes only; the
/// finite-difference gradient oracle perturbs parameters around this.
pub fn fd_batch_loss(model: &CnnModel, batch: &[(&Frame2D, FineClass)]) -> f64 {
    let mut sum = 0.0;
    for &(frame, label) in batch {
        let trace = forward(model, frame).unwrap();
        let logits = trace.logits();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        sum += lse - logits[label.code() as usize];
    }
    sum / batch.len() as f64
}

/// Central finite differences over every parameter, step `h`.
pub fn fd_gradients(
    model: &CnnModel,
    batch: &[(&Frame2D, FineClass)],
    h: f64,
) -> Vec<Vec<f64>> {
    let mut work = model.clone();
    let n_tensors = model.param_tensors().len();
    let mut out = Vec::with_capacity(n_tensors);
    for tensor_idx in 0..n_tensors {
        let len = model.param_tensors()[tensor_idx].1.len();
        let mut grad = vec![0.0; len];
        for (k, g) in grad.iter_mut().enumerate() {
            let original = model.param_tensors()[tensor_idx].1[k];
            work.param_tensors_mut()[tensor_idx].1[k] = original + h;
            let up = fd_batch_loss(&work, batch);
            work.param_tensors_mut()[tensor_idx].1[k] = original - h;
            let down = fd_batch_loss(&work, batch);
            work.param_tensors_mut()[tensor_idx].1[k] = original;
            *g = (up - down) / (2.0 * h);
        }
        out.push(grad);
    }
    out
}

/// Max relative error with a small absolute floor so near-zero entries
/// compare meaningfully.
pub fn max_rel_err(analytic: &[(usize, &[f64])], numeric: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for ((_, a), n) in analytic.iter().zip(numeric.iter()) {
        for (&x, &y) in a.iter().zip(n.iter()) {
            let denom = x.abs().max(y.abs()).max(1e-6);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

/// Exact solver for the SVM dual on tiny problems (n <= ~8) by active-set
/// enumeration: every sample is assigned to {alpha = 0, alpha = C, free},
/// the stationarity system is solved for the free block, and KKT
/// feasibility selects the optimum. Returns (alpha, max-form objective).
pub fn qp_solve_exact(gram: &[f64], labels: &[f64], c: f64) -> Option<(Vec<f64>, f64)> {
    let n = labels.len();
    assert!(n <= 8, "enumeration oracle is for tiny problems");
    let q = |i: usize, j: usize| labels[i] * labels[j] * gram[i * n + j];
    let mut best: Option<(Vec<f64>, f64)> = None;

    // Ternary assignment encoded in base 3: 0 -> alpha=0, 1 -> alpha=C, 2 -> free.
    let combos = 3usize.pow(n as u32);
    'outer: for code in 0..combos {
        let mut kind = vec![0u8; n];
        let mut rem = code;
        for k in kind.iter_mut() {
            *k = (rem % 3) as u8;
            rem /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| kind[i] == 2).collect();
        let upper: Vec<usize> = (0..n).filter(|&i| kind[i] == 1).collect();

        let mut alpha = vec![0.0; n];
        for &u in &upper {
            alpha[u] = c;
        }

        let nu; // multiplier of the equality constraint
        if free.is_empty() {
            // Equality constraint must already hold.
            let balance: f64 = (0..n).map(|i| alpha[i] * labels[i]).sum();
            if balance.abs() > 1e-9 {
                continue;
            }
            // Need some nu satisfying the sign conditions below; scan the
            // feasible interval.
            let grad = |i: usize| -> f64 {
                (0..n).map(|j| q(i, j) * alpha[j]).sum::<f64>() - 1.0
            };
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for i in 0..n {
                let g = grad(i);
                match kind[i] {
                    0 => {
                        // g + nu*y >= 0
                        if labels[i] > 0.0 {
                            lo = lo.max(-g);
                        } else {
                            hi = hi.min(g);
                        }
                    }
                    1 => {
                        // g + nu*y <= 0
                        if labels[i] > 0.0 {
                            hi = hi.min(-g);
                        } else {
                            lo = lo.max(g);
                        }
                    }
                    _ => unreachable!(),
                }
            }
            if lo > hi + 1e-9 {
                continue;
            }
            nu = (lo.max(hi.min(0.0))).clamp(lo, hi);
        } else {
            // Solve [Q_FF  y_F; y_F' 0] [alpha_F; nu] = [1 - Q_FU*C; -C*sum(y_U)].
            let m = free.len() + 1;
            let mut a = vec![0.0; m * m];
            let mut b = vec![0.0; m];
            for (r, &i) in free.iter().enumerate() {
                for (cidx, &j) in free.iter().enumerate() {
                    a[r * m + cidx] = q(i, j);
                }
                a[r * m + free.len()] = labels[i];
                let fixed: f64 = upper.iter().map(|&u| q(i, u) * c).sum();
                b[r] = 1.0 - fixed;
            }
            for (cidx, &j) in free.iter().enumerate() {
                a[free.len() * m + cidx] = labels[j];
            }
            let rhs: f64 = -c * upper.iter().map(|&u| labels[u]).sum::<f64>();
            b[free.len()] = rhs;
            let sol = match solve_dense(&mut a, &mut b, m) {
                Some(s) => s,
                None => continue,
            };
            for (idx, &i) in free.iter().enumerate() {
                let v = sol[idx];
                if !(0.0..=c).contains(&v) || !v.is_finite() {
                    continue 'outer;
                }
                alpha[i] = v;
            }
            nu = sol[free.len()];
            // Sign conditions on the clamped variables.
            for i in 0..n {
                let g: f64 = (0..n).map(|j| q(i, j) * alpha[j]).sum::<f64>() - 1.0;
                match kind[i] {
                    0 if g + nu * labels[i] < -1e-9 => continue 'outer,
                    1 if g + nu * labels[i] > 1e-9 => continue 'outer,
                    _ => {}
                }
            }
        }
        let _ = nu;

        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += alpha[i] * alpha[j] * q(i, j);
            }
        }
        let objective = alpha.iter().sum::<f64>() - 0.5 * quad;
        match &best {
            Some((_, cur)) if objective <= *cur => {}
            _ => best = Some((alpha, objective)),
        }
    }
    best
}

/// Gaussian elimination with partial pivoting; None when singular.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

/// Mann-Whitney statistic by brute-force pair counting, ties worth 1/2.
pub fn mann_whitney_auc(scores: &[f64], truth: &[bool]) -> f64 {
    let pos: Vec<f64> = scores
        .iter()
        .zip(truth.iter())
        .filter(|(_, &t)| t)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(truth.iter())
        .filter(|(_, &t)| !t)
        .map(|(&s, _)| s)
        .collect();
    let mut sum = 0.0;
    for &p in &pos {
        for &q in &neg {
            sum += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    sum / (pos.len() as f64 * neg.len() as f64)
}

/// Clopper-Pearson bounds by bisection on the binomial tail computed with
/// the pmf recurrence p_{k+1} = p_k * (n-k)/(k+1) * p/(1-p) from (1-p)^n.
pub fn clopper_pearson_oracle(k: u64, n: u64, alpha: f64) -> (f64, f64) {
    let tail_ge = |p: f64| -> f64 {
        // P[X >= k] under Binomial(n, p).
        if k == 0 {
            return 1.0;
        }
        1.0 - cdf_below(k, n, p)
    };
    let tail_le = |p: f64| -> f64 { cdf_below(k + 1, n, p) };

    // Both objectives rise with p: P[X >= k | p] grows and P[X <= k | p]
    // shrinks, so bisection walks right while the objective is negative.
    let lower = if k == 0 {
        0.0
    } else {
        bisect(|p| tail_ge(p) - alpha / 2.0, 0.0, 1.0)
    };
    let upper = if k == n {
        1.0
    } else {
        bisect(|p| alpha / 2.0 - tail_le(p), 0.0, 1.0)
    };
    (lower, upper)
}

/// P[X < k] = sum_{i=0}^{k-1} pmf(i) via the stable forward recurrence.
fn cdf_below(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut cdf = pmf;
    let ratio = p / (1.0 - p);
    for i in 0..k.saturating_sub(1) {
        pmf *= (n - i) as f64 / (i + 1) as f64 * ratio;
        cdf += pmf;
    }
    cdf.min(1.0)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    // f is monotone increasing in p for the tails used here.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvalues and eigenvectors of a small symmetric matrix by power
/// iteration with deflation; independent of the production eigensolver.
pub fn power_iteration_eigs(matrix: &[f64], dim: usize, count: usize) -> Vec<(f64, Vec<f64>)> {
    let mut work = matrix.to_vec();
    let mut results = Vec::with_capacity(count);
    for round in 0..count {
        let mut v: Vec<f64> = (0..dim)
            .map(|i| 1.0 + ((i * 7 + round * 13) % 11) as f64 * 0.01)
            .collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..20_000 {
            let mut next = vec![0.0; dim];
            for r in 0..dim {
                for c in 0..dim {
                    next[r] += work[r * dim + c] * v[c];
                }
            }
            lambda = dot(&next, &v);
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                break;
            }
            next.iter_mut().for_each(|x| *x /= norm);
            let delta: f64 = next
                .iter()
                .zip(v.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            if delta < 1e-15 {
                break;
            }
        }
        results.push((lambda, v.clone()));
        // Deflate.
        for r in 0..dim {
            for c in 0..dim {
                work[r * dim + c] -= lambda * v[r] * v[c];
            }
        }
    }
    results
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Counting oracle for the volume distribution equations.
pub fn count_distribution(labels: &[FineClass]) -> ([u64; 5], u64) {
    let mut counts = [0u64; 5];
    for l in labels {
        counts[l.code() as usize] += 1;
    }
    (counts, labels.len() as u64)
}
