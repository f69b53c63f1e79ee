//! Multi-class kernel SVM over the fused 7-D features: one-vs-one SMO
//! training, majority voting for hard labels, and one-vs-rest Platt
//! calibration for class probabilities.

mod io;
mod platt;
mod smo;

pub use io::{load_svm_model, save_svm_model};
pub use platt::{fit_platt, PlattParams};
pub(crate) use smo::{solve_binary, BinaryProblem};

use crate::dataset::FineClass;
use crate::error::{CadxError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub kernel: KernelKind,
    pub c: f64,
    /// RBF width; None selects 1 / (dim * Var) on the standardized
    /// training features.
    pub gamma: Option<f64>,
    pub smo_tolerance: f64,
    /// Iteration budget multiplier: the solver runs at most
    /// max_passes * n pair optimizations per binary problem.
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: KernelKind::Rbf,
            c: 1.0,
            gamma: None,
            smo_tolerance: 1e-3,
            max_passes: 100,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c <= 0.0 {
            return Err(CadxError::validation("SVM C must be positive"));
        }
        if let Some(g) = self.gamma {
            if g <= 0.0 {
                return Err(CadxError::validation("SVM gamma must be positive"));
            }
        }
        if self.smo_tolerance <= 0.0 || self.max_passes == 0 {
            return Err(CadxError::validation(
                "SMO tolerance and max_passes must be positive",
            ));
        }
        Ok(())
    }
}

/// Per-dimension standardization (zero mean, unit population variance),
/// fit on the training split only. Zero-variance dimensions are centered
/// but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(features: &[Vec<f64>]) -> Result<FeatureScaler> {
        if features.is_empty() {
            return Err(CadxError::validation("cannot fit scaler on no features"));
        }
        let dim = features[0].len();
        let n = features.len() as f64;
        let mut mean = vec![0.0; dim];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for f in features {
            for ((s, v), m) in var.iter_mut().zip(f.iter()).zip(mean.iter()) {
                let d = v - m;
                *s += d * d;
            }
        }
        let std = var
            .iter()
            .map(|&v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FeatureScaler { mean, std })
    }

    pub fn transform(&self, feature: &[f64]) -> Vec<f64> {
        feature
            .iter()
            .zip(self.mean.iter())
            .zip(self.std.iter())
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// One trained binary subproblem of the one-vs-one scheme. The decision
/// value is oriented so that positive favors the higher class code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairClassifier {
    pub lo: FineClass,
    pub hi: FineClass,
    /// Standardized support vectors, flattened n_sv x dim.
    pub support_vectors: Vec<f64>,
    /// Dual coefficients alpha_i * y_i, one per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl PairClassifier {
    fn decision(&self, x_std: &[f64], kernel: KernelKind, gamma: f64) -> f64 {
        let dim = x_std.len();
        let mut sum = self.bias;
        for (sv, coef) in self
            .support_vectors
            .chunks_exact(dim)
            .zip(self.coefficients.iter())
        {
            sum += coef * kernel_value(kernel, gamma, sv, x_std);
        }
        sum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub config: SvmConfig,
    /// Resolved kernel width actually used.
    pub gamma: f64,
    pub dim: usize,
    pub scaler: FeatureScaler,
    /// Classes present in training, ascending by code.
    pub classes: Vec<FineClass>,
    pub pairs: Vec<PairClassifier>,
    /// One-vs-rest Platt parameters, parallel to `classes`.
    pub platt: Vec<PlattParams>,
}

pub fn kernel_value(kind: KernelKind, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        KernelKind::Linear => a.iter().zip(b.iter()).map(|(x, y)| x * y).sum(),
        KernelKind::Rbf => {
            let sq: f64 = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            (-gamma * sq).exp()
        }
    }
}

pub fn train_svm(
    features: &[Vec<f64>],
    labels: &[FineClass],
    config: &SvmConfig,
) -> Result<SvmModel> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(CadxError::validation("feature/label length mismatch"));
    }
    if features.is_empty() {
        return Err(CadxError::validation("no training samples"));
    }
    let dim = features[0].len();
    for f in features {
        if f.len() != dim {
            return Err(CadxError::validation("inconsistent feature dimensions"));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(CadxError::numeric("non-finite training feature"));
        }
    }
    let mut classes: Vec<FineClass> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(CadxError::validation(
            "need at least two classes to train an SVM",
        ));
    }

    let scaler = FeatureScaler::fit(features)?;
    let standardized: Vec<Vec<f64>> = features.iter().map(|f| scaler.transform(f)).collect();
    let gamma = match config.gamma {
        Some(g) => g,
        None => {
            let n = (standardized.len() * dim) as f64;
            let mean: f64 = standardized.iter().flatten().sum::<f64>() / n;
            let var: f64 = standardized
                .iter()
                .flatten()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / n;
            if var > 0.0 {
                1.0 / (dim as f64 * var)
            } else {
                1.0 / dim as f64
            }
        }
    };

    let mut pairs = Vec::new();
    for (a_idx, &lo) in classes.iter().enumerate() {
        for &hi in &classes[a_idx + 1..] {
            pairs.push(train_pair(&standardized, labels, lo, hi, gamma, config));
        }
    }

    // One-vs-rest Platt calibration on oriented pairwise decision values.
    let score_of = |x_std: &[f64], class: FineClass| -> f64 {
        class_score(&pairs, x_std, class, config.kernel, gamma)
    };
    let mut platt = Vec::with_capacity(classes.len());
    for &class in &classes {
        let scores: Vec<f64> = standardized.iter().map(|x| score_of(x, class)).collect();
        let targets: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        platt.push(fit_platt(&scores, &targets));
    }

    Ok(SvmModel {
        config: *config,
        gamma,
        dim,
        scaler,
        classes,
        pairs,
        platt,
    })
}

fn train_pair(
    standardized: &[Vec<f64>],
    labels: &[FineClass],
    lo: FineClass,
    hi: FineClass,
    gamma: f64,
    config: &SvmConfig,
) -> PairClassifier {
    let subset: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == lo || l == hi)
        .map(|(i, _)| i)
        .collect();
    let n = subset.len();
    let y: Vec<f64> = subset
        .iter()
        .map(|&i| if labels[i] == hi { 1.0 } else { -1.0 })
        .collect();
    let mut gram = vec![0.0; n * n];
    for a in 0..n {
        gram[a * n + a] = kernel_value(
            config.kernel,
            gamma,
            &standardized[subset[a]],
            &standardized[subset[a]],
        );
        for b in a + 1..n {
            let v = kernel_value(
                config.kernel,
                gamma,
                &standardized[subset[a]],
                &standardized[subset[b]],
            );
            gram[a * n + b] = v;
            gram[b * n + a] = v;
        }
    }
    let solution = solve_binary(&BinaryProblem {
        gram: &gram,
        labels: &y,
        c: config.c,
        tolerance: config.smo_tolerance,
        max_iterations: (config.max_passes * n).max(1000),
    });
    let dim = standardized[0].len();
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for (k, &a) in solution.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.extend_from_slice(&standardized[subset[k]]);
            coefficients.push(a * y[k]);
        }
    }
    let _ = dim;
    PairClassifier {
        lo,
        hi,
        support_vectors,
        coefficients,
        bias: solution.bias,
    }
}

/// Mean oriented pairwise decision value for `class`: +f for pairs where
/// the class sits on the positive (higher-code) side, -f otherwise.
fn class_score(
    pairs: &[PairClassifier],
    x_std: &[f64],
    class: FineClass,
    kernel: KernelKind,
    gamma: f64,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for pair in pairs {
        if pair.hi == class {
            sum += pair.decision(x_std, kernel, gamma);
            count += 1;
        } else if pair.lo == class {
            sum -= pair.decision(x_std, kernel, gamma);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

impl SvmModel {
    fn check_feature(&self, feature: &[f64]) -> Result<()> {
        if feature.len() != self.dim {
            return Err(CadxError::validation(format!(
                "feature dimension {} does not match model dimension {}",
                feature.len(),
                self.dim
            )));
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(CadxError::numeric("non-finite feature"));
        }
        Ok(())
    }

    /// One-vs-one voting; a pairwise decision of exactly zero votes for the
    /// higher code, and vote ties also resolve toward the higher code.
    pub fn predict_label(&self, feature: &[f64]) -> Result<FineClass> {
        self.check_feature(feature)?;
        let x = self.scaler.transform(feature);
        let mut votes = [0u32; 5];
        for pair in &self.pairs {
            let f = pair.decision(&x, self.config.kernel, self.gamma);
            let winner = if f >= 0.0 { pair.hi } else { pair.lo };
            votes[winner.code() as usize] += 1;
        }
        let mut best = self.classes[0];
        for &class in &self.classes {
            if votes[class.code() as usize] >= votes[best.code() as usize] {
                best = class; // classes ascend, so ties land on the higher code
            }
        }
        Ok(best)
    }

    /// Calibrated probabilities over all five fine classes; classes absent
    /// from training get probability zero before renormalization.
    pub fn predict_proba(&self, feature: &[f64]) -> Result<[f64; 5]> {
        self.check_feature(feature)?;
        if self.platt.len() != self.classes.len() {
            return Err(CadxError::validation("model lacks Platt calibration"));
        }
        let x = self.scaler.transform(feature);
        let mut probs = [0.0f64; 5];
        for (&class, platt) in self.classes.iter().zip(self.platt.iter()) {
            let score = class_score(&self.pairs, &x, class, self.config.kernel, self.gamma);
            probs[class.code() as usize] = platt.probability(score);
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(CadxError::numeric("degenerate probability normalization"));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(probs)
    }

    /// Dual objective of every pairwise subproblem is not retained; tests
    /// re-derive it through `train_svm` internals, so expose the pieces.
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }
}

/// Solves one binary problem directly; used by tests and the acceptance
/// suite to compare the SMO dual objective against an independent oracle.
pub fn solve_binary_problem(
    gram: &[f64],
    labels: &[f64],
    c: f64,
    tolerance: f64,
) -> (Vec<f64>, f64, f64) {
    let solution = solve_binary(&BinaryProblem {
        gram,
        labels,
        c,
        tolerance,
        max_iterations: 1_000_000,
    });
    let objective = solution.dual_objective(gram, labels);
    (solution.alpha, solution.bias, objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn embed(x: f64) -> Vec<f64> {
        let mut v = vec![0.0; 7];
        v[0] = x;
        v
    }

    fn toy_config() -> SvmConfig {
        SvmConfig {
            kernel: KernelKind::Linear,
            c: 10.0,
            gamma: None,
            smo_tolerance: 1e-9,
            max_passes: 1000,
        }
    }

    #[test]
    fn two_point_probe_is_positive_class() {
        let features = vec![embed(-1.0), embed(1.0)];
        let labels = vec![FineClass::Normal, FineClass::Ectropion];
        let model = train_svm(&features, &labels, &toy_config()).unwrap();
        assert_eq!(model.predict_label(&embed(2.0)).unwrap(), FineClass::Ectropion);
        assert_eq!(model.predict_label(&embed(-2.0)).unwrap(), FineClass::Normal);
    }

    #[test]
    fn separable_training_points_classified_correctly() {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut r = rng::seeded(5);
        for class in [FineClass::Normal, FineClass::Lsil, FineClass::Cancer] {
            for _ in 0..8 {
                let center = class.code() as f64 * 4.0;
                let mut v = vec![0.0; 7];
                v[0] = center + rng::uniform_in(&mut r, -0.5, 0.5);
                v[1] = center - rng::uniform_in(&mut r, -0.5, 0.5);
                features.push(v);
                labels.push(class);
            }
        }
        let cfg = SvmConfig {
            kernel: KernelKind::Rbf,
            ..toy_config()
        };
        let model = train_svm(&features, &labels, &cfg).unwrap();
        for (f, &l) in features.iter().zip(labels.iter()) {
            assert_eq!(model.predict_label(f).unwrap(), l);
        }
    }

    #[test]
    fn duplicated_training_set_keeps_decision_function() {
        let base: Vec<(Vec<f64>, FineClass)> = vec![
            (embed(-2.0), FineClass::Normal),
            (embed(-1.0), FineClass::Normal),
            (embed(1.0), FineClass::Hsil),
            (embed(2.2), FineClass::Hsil),
        ];
        let features: Vec<Vec<f64>> = base.iter().map(|(f, _)| f.clone()).collect();
        let labels: Vec<FineClass> = base.iter().map(|(_, l)| *l).collect();
        let mut doubled_features = features.clone();
        doubled_features.extend(features.iter().cloned());
        let mut doubled_labels = labels.clone();
        doubled_labels.extend(labels.iter().copied());

        let cfg = toy_config();
        let m1 = train_svm(&features, &labels, &cfg).unwrap();
        let m2 = train_svm(&doubled_features, &doubled_labels, &cfg).unwrap();
        for probe in [-3.0, -1.5, -0.2, 0.0, 0.4, 1.7, 3.0] {
            let x1 = m1.scaler.transform(&embed(probe));
            let x2 = m2.scaler.transform(&embed(probe));
            let f1 = m1.pairs[0].decision(&x1, cfg.kernel, m1.gamma);
            let f2 = m2.pairs[0].decision(&x2, cfg.kernel, m2.gamma);
            assert!(
                (f1 - f2).abs() < 1e-6,
                "probe {probe}: {f1} vs {f2} differ"
            );
        }
    }

    #[test]
    fn symmetric_tie_goes_to_higher_code() {
        // Mirrored data around zero; the probe at the mirror axis has a
        // pairwise decision value of exactly zero.
        let features = vec![embed(-1.0), embed(1.0)];
        let labels = vec![FineClass::Lsil, FineClass::Hsil];
        let cfg = SvmConfig {
            kernel: KernelKind::Rbf,
            ..toy_config()
        };
        let model = train_svm(&features, &labels, &cfg).unwrap();
        assert_eq!(model.predict_label(&embed(0.0)).unwrap(), FineClass::Hsil);
    }

    #[test]
    fn single_class_rejected() {
        let features = vec![embed(0.0), embed(1.0)];
        let labels = vec![FineClass::Normal, FineClass::Normal];
        assert!(train_svm(&features, &labels, &toy_config()).is_err());
    }

    #[test]
    fn non_finite_feature_rejected() {
        let features = vec![embed(f64::NAN), embed(1.0)];
        let labels = vec![FineClass::Normal, FineClass::Hsil];
        assert!(train_svm(&features, &labels, &toy_config()).is_err());

        let model = train_svm(
            &[embed(-1.0), embed(1.0)],
            &[FineClass::Normal, FineClass::Hsil],
            &toy_config(),
        )
        .unwrap();
        assert!(model.predict_label(&embed(f64::INFINITY)).is_err());
    }

    #[test]
    fn proba_sums_to_one_and_is_open_interval() {
        let features = vec![embed(-1.0), embed(-0.8), embed(1.0), embed(1.2)];
        let labels = vec![
            FineClass::Normal,
            FineClass::Normal,
            FineClass::Hsil,
            FineClass::Hsil,
        ];
        let model = train_svm(&features, &labels, &toy_config()).unwrap();
        for probe in [-2.0, 0.0, 0.7, 5.0] {
            let p = model.predict_proba(&embed(probe)).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(p[0] > 0.0 && p[0] < 1.0);
            assert!(p[3] > 0.0 && p[3] < 1.0);
        }
    }

    #[test]
    fn symmetric_probe_gets_half_half() {
        let features = vec![embed(-1.0), embed(1.0)];
        let labels = vec![FineClass::Normal, FineClass::Hsil];
        let model = train_svm(&features, &labels, &toy_config()).unwrap();
        let p = model.predict_proba(&embed(0.0)).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-6, "{p:?}");
        assert!((p[3] - 0.5).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn far_positive_probe_saturates() {
        let features = vec![embed(-1.2), embed(-1.0), embed(1.0), embed(1.2)];
        let labels = vec![
            FineClass::Normal,
            FineClass::Normal,
            FineClass::Hsil,
            FineClass::Hsil,
        ];
        let model = train_svm(&features, &labels, &toy_config()).unwrap();
        let p = model.predict_proba(&embed(100.0)).unwrap();
        assert!(p[3] > 0.99, "{p:?}");
    }

    #[test]
    fn rbf_kernel_in_unit_interval_and_one_on_diagonal() {
        let mut r = rng::seeded(8);
        for _ in 0..100 {
            let a: Vec<f64> = (0..7).map(|_| rng::uniform_in(&mut r, -3.0, 3.0)).collect();
            let b: Vec<f64> = (0..7).map(|_| rng::uniform_in(&mut r, -3.0, 3.0)).collect();
            let v = kernel_value(KernelKind::Rbf, 0.25, &a, &b);
            assert!(v > 0.0 && v <= 1.0);
            assert!((kernel_value(KernelKind::Rbf, 0.25, &a, &a) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn training_order_permutation_keeps_predictions() {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut r = rng::seeded(9);
        for class in [FineClass::Normal, FineClass::Cancer] {
            for _ in 0..6 {
                let center = if class == FineClass::Normal { -2.0 } else { 2.0 };
                features.push(embed(center + rng::uniform_in(&mut r, -0.6, 0.6)));
                labels.push(class);
            }
        }
        let cfg = SvmConfig {
            kernel: KernelKind::Rbf,
            ..toy_config()
        };
        let m1 = train_svm(&features, &labels, &cfg).unwrap();
        // Reverse the sample order.
        let rev_f: Vec<Vec<f64>> = features.iter().rev().cloned().collect();
        let rev_l: Vec<FineClass> = labels.iter().rev().copied().collect();
        let m2 = train_svm(&rev_f, &rev_l, &cfg).unwrap();
        for probe in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            assert_eq!(
                m1.predict_label(&embed(probe)).unwrap(),
                m2.predict_label(&embed(probe)).unwrap()
            );
        }
    }

    #[test]
    fn standardization_keeps_two_point_solution_analytic() {
        // {-1, +1} has zero mean and unit population variance, so the
        // standardized problem is the analytic one: alpha = 0.5, b = 0.
        let features = vec![embed(-1.0), embed(1.0)];
        let labels = vec![FineClass::Normal, FineClass::Hsil];
        let model = train_svm(&features, &labels, &toy_config()).unwrap();
        let pair = &model.pairs[0];
        assert_eq!(pair.coefficients.len(), 2);
        assert!((pair.coefficients[0] + 0.5).abs() < 1e-9, "{:?}", pair.coefficients);
        assert!((pair.coefficients[1] - 0.5).abs() < 1e-9);
        assert!(pair.bias.abs() < 1e-9);
    }
}
