//! Specimen-grouped k-fold cross-validation of the full pipeline.

use super::clopper::clopper_pearson;
use super::folds::{plan_folds, FoldPlan};
use super::metrics::{BinaryCounts, ConfusionMatrix};
use super::roc::{roc_and_auc, RocPoint};
use crate::dataset::{GeneralClass, Manifest, ManifestEntry};
use crate::error::Result;
use crate::pipeline::{
    self, infer_volume, preprocess_volume, train_pipeline, NumericDiagnostics, PipelineConfig,
};
use crate::rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub degenerate: bool,
    pub test_volumes: usize,
    pub fine_accuracy: Option<f64>,
    pub fine_accuracy_ci: Option<(f64, f64)>,
    pub binary_accuracy: Option<f64>,
    pub binary_accuracy_ci: Option<(f64, f64)>,
    pub sensitivity: Option<f64>,
    pub sensitivity_ci: Option<(f64, f64)>,
    pub specificity: Option<f64>,
    pub specificity_ci: Option<(f64, f64)>,
    pub auc: Option<f64>,
    pub confusion_fine: ConfusionMatrix,
    pub confusion_binary: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub volumes: usize,
    pub fine_accuracy: f64,
    pub fine_accuracy_ci: (f64, f64),
    pub binary_accuracy: f64,
    pub binary_accuracy_ci: (f64, f64),
    pub sensitivity: Option<f64>,
    pub sensitivity_ci: Option<(f64, f64)>,
    pub specificity: Option<f64>,
    pub specificity_ci: Option<(f64, f64)>,
    pub auc: Option<f64>,
    pub roc: Vec<RocPoint>,
    pub confusion_fine: ConfusionMatrix,
    pub confusion_binary: ConfusionMatrix,
}

/// Mean and sample standard deviation of a per-fold metric over the folds
/// where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub folds_used: usize,
}

impl MeanSd {
    fn from_values(values: &[f64]) -> MeanSd {
        if values.is_empty() {
            return MeanSd {
                mean: None,
                sd: None,
                folds_used: 0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() >= 2 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            Some(var.sqrt())
        } else {
            None
        };
        MeanSd {
            mean: Some(mean),
            sd,
            folds_used: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSdBlock {
    pub fine_accuracy: MeanSd,
    pub binary_accuracy: MeanSd,
    pub sensitivity: MeanSd,
    pub specificity: MeanSd,
    pub auc: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub folds: Vec<FoldReport>,
    pub pooled: PooledReport,
    pub mean_sd: MeanSdBlock,
    pub numeric: NumericDiagnostics,
    pub warnings: Vec<String>,
}

/// Training entries for one fold: every entry whose specimen is not
/// assigned to the held-out fold.
pub fn fold_training_entries<'a>(
    manifest: &'a Manifest,
    plan: &FoldPlan,
    fold: usize,
) -> Vec<&'a ManifestEntry> {
    manifest
        .entries
        .iter()
        .filter(|e| plan.fold_of(&e.specimen_id) != Some(fold))
        .collect()
}

pub fn fold_test_entries<'a>(
    manifest: &'a Manifest,
    plan: &FoldPlan,
    fold: usize,
) -> Vec<&'a ManifestEntry> {
    manifest
        .entries
        .iter()
        .filter(|e| plan.fold_of(&e.specimen_id) == Some(fold))
        .collect()
}

fn ci_pair(k: u64, n: u64) -> Result<(f64, f64)> {
    clopper_pearson(k, n, 0.05)
}

/// Runs the full grouped cross-validation and assembles the report.
pub fn cross_validate(manifest: &Manifest, root: &Path, config: &PipelineConfig) -> Result<EvalReport> {
    config.validate()?;
    manifest.validate()?;
    let plan = plan_folds(manifest, config.folds, config.seed)?;

    let mut fold_reports = Vec::with_capacity(config.folds);
    let mut warnings = Vec::new();
    let mut numeric = NumericDiagnostics::default();
    let mut pooled_fine = ConfusionMatrix::zeros(5);
    let mut pooled_binary = ConfusionMatrix::zeros(2);
    let mut pooled_counts = BinaryCounts::default();
    let mut pooled_scores: Vec<(String, f64, bool)> = Vec::new();
    let mut pooled_fine_correct = 0u64;
    let mut pooled_volumes = 0u64;

    for fold in 0..config.folds {
        let train_entries = fold_training_entries(manifest, &plan, fold);
        let test_entries = fold_test_entries(manifest, &plan, fold);

        let mut class_present = [false; 5];
        for e in &train_entries {
            class_present[e.label.code() as usize] = true;
        }
        if let Some(missing) = class_present.iter().position(|&p| !p) {
            warnings.push(format!(
                "fold {fold} degenerate: class {missing} absent from the training split"
            ));
            fold_reports.push(FoldReport {
                fold,
                degenerate: true,
                test_volumes: test_entries.len(),
                fine_accuracy: None,
                fine_accuracy_ci: None,
                binary_accuracy: None,
                binary_accuracy_ci: None,
                sensitivity: None,
                sensitivity_ci: None,
                specificity: None,
                specificity_ci: None,
                auc: None,
                confusion_fine: ConfusionMatrix::zeros(5),
                confusion_binary: ConfusionMatrix::zeros(2),
            });
            continue;
        }

        let fold_seed = rng::derive_seed(config.seed, 0xFA00 + fold as u64);
        let trained = train_pipeline(manifest, root, &train_entries, config, fold_seed)?;

        let mut actual_fine = Vec::new();
        let mut predicted_fine = Vec::new();
        let mut actual_binary = Vec::new();
        let mut predicted_binary = Vec::new();
        let mut counts = BinaryCounts::default();
        let mut scores = Vec::new();
        for entry in &test_entries {
            let raw = pipeline::load_volume_frames(manifest, root, entry)?;
            let pre = preprocess_volume(&raw, &config.preproc)?;
            let inference = infer_volume(&trained, &pre, entry.age, entry.hpv, config)?;
            numeric.merge(&inference.diagnostics);

            let truth_high = entry.label.general() == GeneralClass::High;
            let pred_high = inference.binary == GeneralClass::High;
            actual_fine.push(entry.label.code() as usize);
            predicted_fine.push(inference.fine.code() as usize);
            actual_binary.push(truth_high as usize);
            predicted_binary.push(pred_high as usize);
            match (truth_high, pred_high) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fn_ += 1,
                (false, true) => counts.fp += 1,
                (false, false) => counts.tn += 1,
            }
            scores.push((entry.volume_id.clone(), inference.p_high, truth_high));
        }

        let confusion_fine = ConfusionMatrix::from_labels(&actual_fine, &predicted_fine, 5)?;
        let confusion_binary = ConfusionMatrix::from_labels(&actual_binary, &predicted_binary, 2)?;
        let n = test_entries.len() as u64;
        let fine_correct = confusion_fine.trace();
        let binary_correct = counts.tp + counts.tn;

        let sensitivity = counts.sensitivity().ok();
        let sensitivity_ci = if counts.tp + counts.fn_ > 0 {
            Some(ci_pair(counts.tp, counts.tp + counts.fn_)?)
        } else {
            None
        };
        let specificity = counts.specificity().ok();
        let specificity_ci = if counts.tn + counts.fp > 0 {
            Some(ci_pair(counts.tn, counts.tn + counts.fp)?)
        } else {
            None
        };
        let fold_scores: Vec<f64> = scores.iter().map(|(_, s, _)| *s).collect();
        let fold_truth: Vec<bool> = scores.iter().map(|(_, _, t)| *t).collect();
        let auc = roc_and_auc(&fold_scores, &fold_truth).ok().map(|c| c.auc);

        pooled_fine.add(&confusion_fine);
        pooled_binary.add(&confusion_binary);
        pooled_counts.add(&counts);
        pooled_scores.extend(scores);
        pooled_fine_correct += fine_correct;
        pooled_volumes += n;

        fold_reports.push(FoldReport {
            fold,
            degenerate: false,
            test_volumes: test_entries.len(),
            fine_accuracy: Some(fine_correct as f64 / n as f64),
            fine_accuracy_ci: Some(ci_pair(fine_correct, n)?),
            binary_accuracy: Some(binary_correct as f64 / n as f64),
            binary_accuracy_ci: Some(ci_pair(binary_correct, n)?),
            sensitivity,
            sensitivity_ci,
            specificity,
            specificity_ci,
            auc,
            confusion_fine,
            confusion_binary,
        });
    }

    if pooled_volumes == 0 {
        return Err(crate::error::CadxError::validation(
            "every fold was degenerate; nothing evaluated",
        ));
    }

    // Pooled metrics over all evaluated volumes, in canonical volume order.
    pooled_scores.sort_by(|a, b| a.0.cmp(&b.0));
    let all_scores: Vec<f64> = pooled_scores.iter().map(|(_, s, _)| *s).collect();
    let all_truth: Vec<bool> = pooled_scores.iter().map(|(_, _, t)| *t).collect();
    let pooled_roc = roc_and_auc(&all_scores, &all_truth).ok();
    let pooled = PooledReport {
        volumes: pooled_volumes as usize,
        fine_accuracy: pooled_fine_correct as f64 / pooled_volumes as f64,
        fine_accuracy_ci: ci_pair(pooled_fine_correct, pooled_volumes)?,
        binary_accuracy: (pooled_counts.tp + pooled_counts.tn) as f64 / pooled_volumes as f64,
        binary_accuracy_ci: ci_pair(pooled_counts.tp + pooled_counts.tn, pooled_volumes)?,
        sensitivity: pooled_counts.sensitivity().ok(),
        sensitivity_ci: if pooled_counts.tp + pooled_counts.fn_ > 0 {
            Some(ci_pair(pooled_counts.tp, pooled_counts.tp + pooled_counts.fn_)?)
        } else {
            None
        },
        specificity: pooled_counts.specificity().ok(),
        specificity_ci: if pooled_counts.tn + pooled_counts.fp > 0 {
            Some(ci_pair(pooled_counts.tn, pooled_counts.tn + pooled_counts.fp)?)
        } else {
            None
        },
        auc: pooled_roc.as_ref().map(|c| c.auc),
        roc: pooled_roc.map(|c| c.points).unwrap_or_default(),
        confusion_fine: pooled_fine,
        confusion_binary: pooled_binary,
    };

    let collect = |f: &dyn Fn(&FoldReport) -> Option<f64>| -> Vec<f64> {
        fold_reports
            .iter()
            .filter(|r| !r.degenerate)
            .filter_map(f)
            .collect()
    };
    let mean_sd = MeanSdBlock {
        fine_accuracy: MeanSd::from_values(&collect(&|r| r.fine_accuracy)),
        binary_accuracy: MeanSd::from_values(&collect(&|r| r.binary_accuracy)),
        sensitivity: MeanSd::from_values(&collect(&|r| r.sensitivity)),
        specificity: MeanSd::from_values(&collect(&|r| r.specificity)),
        auc: MeanSd::from_values(&collect(&|r| r.auc)),
    };

    Ok(EvalReport {
        version: REPORT_VERSION,
        folds: fold_reports,
        pooled,
        mean_sd,
        numeric,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_phantom_dataset, PhantomConfig};
    use crate::neuralnet::NetConfig;
    use crate::pipeline::{fit_age_scaler_on, TrainParams};

    fn small_config() -> PipelineConfig {
        let mut config = PipelineConfig {
            folds: 3,
            ..Default::default()
        };
        config.preproc.crop_size = 32;
        config.preproc.target_size = 32;
        config.net = NetConfig {
            input_size: 32,
            conv_channels: vec![4, 8],
            fc1_dim: 32,
            fc2_dim: 32,
            trainable: Vec::new(),
        };
        config.train = TrainParams {
            epochs: 2,
            batch_size: 8,
            cnn_frames_per_volume: 3,
        };
        config
    }

    #[test]
    fn folds_partition_volumes_and_pool_conserves() {
        // Three specimens per class over three folds: greedy balancing can
        // put at most two of a class into one fold, so every training split
        // sees all classes and the pooled totals conserve.
        let dir = tempfile::tempdir().unwrap();
        let phantom = PhantomConfig::uniform(3, 1, 1, 5, 32);
        let manifest = generate_phantom_dataset(&phantom, 21, dir.path()).unwrap();
        let config = small_config();
        let plan = plan_folds(&manifest, config.folds, config.seed).unwrap();
        // Disjoint train/test volume ids per fold.
        for fold in 0..config.folds {
            let train: std::collections::HashSet<&str> =
                fold_training_entries(&manifest, &plan, fold)
                    .iter()
                    .map(|e| e.volume_id.as_str())
                    .collect();
            let test = fold_test_entries(&manifest, &plan, fold);
            for e in &test {
                assert!(!train.contains(e.volume_id.as_str()));
            }
        }
        let report = cross_validate(&manifest, dir.path(), &config).unwrap();
        assert_eq!(report.pooled.confusion_fine.total(), 15);
        assert_eq!(report.pooled.volumes, 15);
        assert!(report.numeric.worst() < 1e-12);
        let fold_total: usize = report.folds.iter().map(|f| f.test_volumes).sum();
        assert_eq!(fold_total, 15);
    }

    #[test]
    fn age_scaler_ignores_test_patients() {
        let dir = tempfile::tempdir().unwrap();
        let phantom = PhantomConfig::uniform(3, 2, 1, 4, 32);
        let manifest = generate_phantom_dataset(&phantom, 33, dir.path()).unwrap();
        let plan = plan_folds(&manifest, 3, 0).unwrap();
        for fold in 0..3 {
            let train = fold_training_entries(&manifest, &plan, fold);
            let scaler = fit_age_scaler_on(&train).unwrap();
            // Deleting a test patient's held-out entries from the manifest
            // leaves the training-fold scaler untouched.
            let test = fold_test_entries(&manifest, &plan, fold);
            for removed in &test {
                let reduced_entries: Vec<ManifestEntry> = manifest
                    .entries
                    .iter()
                    .filter(|e| {
                        !(e.patient_id == removed.patient_id
                            && plan.fold_of(&e.specimen_id) == Some(fold))
                    })
                    .cloned()
                    .collect();
                let reduced = crate::dataset::Manifest::new(reduced_entries).unwrap();
                let train2 = fold_training_entries(&reduced, &plan, fold);
                let scaler2 = fit_age_scaler_on(&train2).unwrap();
                assert_eq!(scaler, scaler2);
            }
        }
    }

    #[test]
    fn degenerate_fold_recorded_with_warning() {
        // Cancer has a single specimen, so whichever fold holds it trains
        // without class 4 and is skipped; the other classes have three
        // specimens each and stay spread across folds.
        let dir = tempfile::tempdir().unwrap();
        let phantom = PhantomConfig {
            patients_per_class: [3, 3, 3, 3, 1],
            specimens_per_patient: 1,
            volumes_per_specimen: [1, 1, 1, 1, 1],
            frames_per_volume: 4,
            frame_size: 32,
        };
        let manifest = generate_phantom_dataset(&phantom, 8, dir.path()).unwrap();
        let config = small_config();
        let report = cross_validate(&manifest, dir.path(), &config).unwrap();
        let degenerate = report.folds.iter().filter(|f| f.degenerate).count();
        assert_eq!(degenerate, 1);
        assert!(report.warnings[0].contains("class 4"));
        // Degenerate folds are excluded from the mean/sd aggregation.
        let evaluated = report.folds.iter().filter(|f| !f.degenerate).count();
        assert_eq!(report.mean_sd.fine_accuracy.folds_used, evaluated);
    }
}
