//! Exact Clopper-Pearson binomial confidence intervals by bisection on the
//! binomial tail, with the tail evaluated through log-space term summation
//! (log-factorials), which keeps it numerically independent of the
//! recurrence-based oracle in the test suite.

use crate::error::{CadxError, Result};

/// Two-sided exact interval at confidence 1 - alpha. The lower bound solves
/// P[X >= k | p] = alpha/2 (0 when k = 0) and the upper bound solves
/// P[X <= k | p] = alpha/2 (1 when k = n); both to within 1e-9 absolute.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(CadxError::validation("need at least one trial"));
    }
    if k > n {
        return Err(CadxError::validation(format!(
            "successes {k} exceed trials {n}"
        )));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(CadxError::validation("alpha must lie strictly in (0, 1)"));
    }
    let half = alpha / 2.0;
    let lnfact = ln_factorials(n);

    let lower = if k == 0 {
        0.0
    } else {
        // P[X >= k | p] increases monotonically from 0 to 1 in p.
        bisect(|p| tail_upper(k, n, p, &lnfact) - half)
    };
    let upper = if k == n {
        1.0
    } else {
        // P[X <= k | p] decreases monotonically from 1 to 0 in p.
        bisect(|p| half - tail_lower(k, n, p, &lnfact))
    };
    Ok((lower, upper))
}

/// P[X >= k | p] via log-space pmf terms.
fn tail_upper(k: u64, n: u64, p: f64, lnfact: &[f64]) -> f64 {
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return 1.0;
    }
    (k..=n).map(|i| pmf(i, n, p, lnfact)).sum::<f64>().min(1.0)
}

/// P[X <= k | p].
fn tail_lower(k: u64, n: u64, p: f64, lnfact: &[f64]) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (0..=k).map(|i| pmf(i, n, p, lnfact)).sum::<f64>().min(1.0)
}

fn pmf(i: u64, n: u64, p: f64, lnfact: &[f64]) -> f64 {
    let ln_c = lnfact[n as usize] - lnfact[i as usize] - lnfact[(n - i) as usize];
    (ln_c + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp()
}

fn ln_factorials(n: u64) -> Vec<f64> {
    let mut out = vec![0.0; n as usize + 1];
    for i in 2..=n as usize {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

/// `f` crosses from positive to negative as p rises; returns the root.
fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // Orient: tail_upper - half rises with p, so f(0) < 0 there; handle both
    // orientations by checking the sign at the low end.
    let rising = f(0.0) <= 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        let go_right = if rising { v < 0.0 } else { v > 0.0 };
        if go_right {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_zero_closed_form() {
        // Upper bound solves (1-p)^n = alpha/2: upper = 1 - (alpha/2)^(1/n).
        let (lo, hi) = clopper_pearson(0, 10, 0.05).unwrap();
        assert_eq!(lo, 0.0);
        let expected = 1.0 - 0.025f64.powf(0.1);
        assert!((hi - expected).abs() < 1e-9, "hi {hi} vs {expected}");
        assert!((hi - 0.30850).abs() < 1e-4);
    }

    #[test]
    fn k_equals_n_mirrors_k_zero() {
        let (lo, hi) = clopper_pearson(10, 10, 0.05).unwrap();
        assert_eq!(hi, 1.0);
        let expected = 0.025f64.powf(0.1);
        assert!((lo - expected).abs() < 1e-9);
        assert!((lo - 0.69150).abs() < 1e-4);
    }

    #[test]
    fn matches_independent_oracle() {
        for (k, n) in [(8u64, 10u64), (1, 12), (5, 9), (25, 50), (3, 40)] {
            let (lo, hi) = clopper_pearson(k, n, 0.05).unwrap();
            let (olo, ohi) = crate::oracles::clopper_pearson_oracle(k, n, 0.05);
            assert!((lo - olo).abs() < 1e-6, "k={k} n={n}: lo {lo} vs {olo}");
            assert!((hi - ohi).abs() < 1e-6, "k={k} n={n}: hi {hi} vs {ohi}");
        }
    }

    #[test]
    fn interval_contains_the_point_estimate() {
        for (k, n) in [(0u64, 7u64), (3, 7), (7, 7), (13, 29), (1, 100)] {
            let (lo, hi) = clopper_pearson(k, n, 0.05).unwrap();
            let p = k as f64 / n as f64;
            assert!(lo <= p + 1e-12 && p <= hi + 1e-12, "({lo},{hi}) vs {p}");
        }
    }

    #[test]
    fn width_shrinks_with_sample_size() {
        // Same ratio, nested doubling.
        let mut last_width = f64::INFINITY;
        for m in [1u64, 2, 4, 8, 16] {
            let (lo, hi) = clopper_pearson(3 * m, 10 * m, 0.05).unwrap();
            let width = hi - lo;
            assert!(width < last_width, "width {width} not shrinking");
            last_width = width;
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(clopper_pearson(0, 0, 0.05).is_err());
        assert!(clopper_pearson(5, 4, 0.05).is_err());
        assert!(clopper_pearson(1, 4, 0.0).is_err());
        assert!(clopper_pearson(1, 4, 1.0).is_err());
    }
}
