//! PCA of feature vectors via a cyclic Jacobi eigensolver on the sample
//! covariance; when the dimension exceeds the sample count the
//! Gram-matrix trick keeps the eigenproblem at n x n.

use crate::error::{CadxError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal principal axes, strongest first; the largest-magnitude
    /// entry of each axis is positive.
    pub axes: Vec<Vec<f64>>,
    /// Explained variances (sample covariance eigenvalues), nonincreasing.
    pub variances: Vec<f64>,
}

pub fn pca_fit(features: &[Vec<f64>], q: usize) -> Result<PcaModel> {
    if q == 0 {
        return Err(CadxError::validation("need at least one component"));
    }
    let n = features.len();
    if n < q + 1 {
        return Err(CadxError::validation(format!(
            "need at least {} samples for {q} components, got {n}",
            q + 1
        )));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(CadxError::validation("inconsistent feature dimensions"));
    }
    if q > d {
        return Err(CadxError::validation(format!(
            "components {q} exceed feature dimension {d}"
        )));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CadxError::numeric("non-finite feature"));
    }

    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.iter().zip(mean.iter()).map(|(v, m)| v - m).collect())
        .collect();
    let denom = (n - 1) as f64;

    let (axes, variances) = if d <= n {
        // Direct d x d sample covariance.
        let mut cov = vec![0.0; d * d];
        for row in &centered {
            for i in 0..d {
                for j in i..d {
                    cov[i * d + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov[i * d + j] / denom;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        let eig = jacobi_eigen(&cov, d);
        let axes = eig.iter().take(q).map(|(_, v)| v.clone()).collect();
        let variances = eig.iter().take(q).map(|(l, _)| l.max(0.0)).collect();
        (axes, variances)
    } else {
        // Gram trick: eigenvectors u of X X'/ (n-1) map to axes X'u.
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = centered[i]
                    .iter()
                    .zip(centered[j].iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / denom;
                gram[i * n + j] = v;
                gram[j * n + i] = v;
            }
        }
        let eig = jacobi_eigen(&gram, n);
        let mut axes: Vec<Vec<f64>> = Vec::with_capacity(q);
        let mut variances = Vec::with_capacity(q);
        for (lambda, u) in eig.iter().take(q) {
            let mut axis = vec![0.0; d];
            for (row, &coef) in centered.iter().zip(u.iter()) {
                for (a, v) in axis.iter_mut().zip(row.iter()) {
                    *a += coef * v;
                }
            }
            // Orthogonalize against what we already have, then normalize;
            // rank-deficient directions fall back to basis vectors.
            gram_schmidt(&mut axis, &axes);
            if norm(&axis) < 1e-9 {
                axis = complement_axis(d, &axes)?;
            }
            let inv = 1.0 / norm(&axis);
            axis.iter_mut().for_each(|v| *v *= inv);
            axes.push(axis);
            variances.push(lambda.max(0.0));
        }
        (axes, variances)
    };

    let mut model = PcaModel {
        mean,
        axes,
        variances,
    };
    // Sign convention: the largest-magnitude entry of each axis is positive.
    for axis in model.axes.iter_mut() {
        let mut lead = 0usize;
        for (i, v) in axis.iter().enumerate() {
            if v.abs() > axis[lead].abs() {
                lead = i;
            }
        }
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(model)
}

pub fn pca_project(model: &PcaModel, feature: &[f64]) -> Result<Vec<f64>> {
    if feature.len() != model.mean.len() {
        return Err(CadxError::validation(format!(
            "feature dimension {} does not match PCA dimension {}",
            feature.len(),
            model.mean.len()
        )));
    }
    let centered: Vec<f64> = feature
        .iter()
        .zip(model.mean.iter())
        .map(|(v, m)| v - m)
        .collect();
    Ok(model
        .axes
        .iter()
        .map(|axis| axis.iter().zip(centered.iter()).map(|(a, c)| a * c).sum())
        .collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn gram_schmidt(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let proj: f64 = v.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
        for (x, c) in v.iter_mut().zip(b.iter()) {
            *x -= proj * c;
        }
    }
}

/// First standard basis vector with a usable orthogonal complement.
fn complement_axis(d: usize, basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    for k in 0..d {
        let mut candidate = vec![0.0; d];
        candidate[k] = 1.0;
        gram_schmidt(&mut candidate, basis);
        if norm(&candidate) > 1e-6 {
            return Ok(candidate);
        }
    }
    Err(CadxError::numeric(
        "could not complete an orthonormal basis for rank-deficient data",
    ))
}

/// Cyclic Jacobi for symmetric matrices; returns eigenpairs sorted by
/// eigenvalue descending, eigenvectors normalized.
fn jacobi_eigen(matrix: &[f64], d: usize) -> Vec<(f64, Vec<f64>)> {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale: f64 = matrix
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in p + 1..d {
                off = off.max(a[p * d + q].abs());
            }
        }
        if off < 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q of A.
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|col| {
            let vec: Vec<f64> = (0..d).map(|row| v[row * d + col]).collect();
            (a[col * d + col], vec)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs
}
