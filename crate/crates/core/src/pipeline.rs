//! End-to-end orchestration shared by training, prediction and
//! cross-validation: one config bundle plus the volume-level plumbing that
//! turns manifest entries into decisions.

use crate::aggregate::{
    binary_decision, fuse, mean_probability_distribution, BinaryDecisionConfig,
    VolumeDistribution, VolumePrediction,
};
use crate::dataset::{FineClass, Frame2D, GeneralClass, Manifest, ManifestEntry};
use crate::error::{CadxError, Result};
use crate::neuralnet::{self, AdamConfig, CnnModel, NetConfig};
use crate::preprocess::{self, AgeScaler, PreprocConfig, RejectReason};
use crate::svm::{train_svm, SvmConfig, SvmModel};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    /// Frames per volume fed to CNN/SVM training, taken evenly spaced from
    /// the accepted stack; 0 means all frames.
    pub cnn_frames_per_volume: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 4,
            batch_size: 16,
            cnn_frames_per_volume: 6,
        }
    }
}

/// How per-frame outputs aggregate into a volume distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    /// Indicator mean over hard per-frame labels.
    Majority,
    /// Mean of per-frame calibrated probability vectors.
    MeanProb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub folds: usize,
    pub preproc: PreprocConfig,
    pub net: NetConfig,
    pub adam: AdamConfig,
    pub train: TrainParams,
    pub svm: SvmConfig,
    pub decision: BinaryDecisionConfig,
    pub aggregate_mode: AggregateMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            folds: 10,
            preproc: PreprocConfig::desk_scale(),
            net: NetConfig::default(),
            adam: AdamConfig::default(),
            train: TrainParams::default(),
            svm: SvmConfig::default(),
            decision: BinaryDecisionConfig::default(),
            aggregate_mode: AggregateMode::Majority,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.preproc.validate()?;
        self.net.validate()?;
        self.adam.validate()?;
        self.svm.validate()?;
        self.decision.validate()?;
        if self.folds < 2 {
            return Err(CadxError::validation("need at least 2 folds"));
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(CadxError::validation(
                "epochs and batch_size must be positive",
            ));
        }
        if self.net.input_size != self.preproc.target_size {
            return Err(CadxError::validation(format!(
                "network input size {} must equal preprocessing target size {}",
                self.net.input_size, self.preproc.target_size
            )));
        }
        Ok(())
    }
}

/// Worst observed deviations of probability vectors from unit sum across a
/// run; the acceptance suite pins these to 1e-12.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NumericDiagnostics {
    pub max_softmax_sum_err: f64,
    pub max_svm_prob_sum_err: f64,
    pub max_volume_dist_sum_err: f64,
}

impl NumericDiagnostics {
    pub fn merge(&mut self, other: &NumericDiagnostics) {
        self.max_softmax_sum_err = self.max_softmax_sum_err.max(other.max_softmax_sum_err);
        self.max_svm_prob_sum_err = self.max_svm_prob_sum_err.max(other.max_svm_prob_sum_err);
        self.max_volume_dist_sum_err = self
            .max_volume_dist_sum_err
            .max(other.max_volume_dist_sum_err);
    }

    pub fn worst(&self) -> f64 {
        self.max_softmax_sum_err
            .max(self.max_svm_prob_sum_err)
            .max(self.max_volume_dist_sum_err)
    }
}

/// One volume after the fixed preprocessing chain.
#[derive(Debug, Clone)]
pub struct PreprocessedVolume {
    /// Accepted frames, filtered, cropped, resized and zero-centered.
    pub frames: Vec<Frame2D>,
    /// Original stack indices of the accepted frames.
    pub accepted_indices: Vec<usize>,
    /// Scalar intensity mean subtracted from the volume.
    pub volume_mean: f64,
    /// Rejection tallies: saturated, dark, blurry.
    pub rejected: [u64; 3],
}

/// Runs gate -> median -> crop -> resize -> zero-center over a frame stack.
pub fn preprocess_volume(frames: &[Frame2D], cfg: &PreprocConfig) -> Result<PreprocessedVolume> {
    let mut kept = Vec::new();
    let mut accepted_indices = Vec::new();
    let mut rejected = [0u64; 3];
    for (idx, frame) in frames.iter().enumerate() {
        match preprocess::quality_gate(frame, cfg) {
            Ok(()) => {
                let filtered = preprocess::median_filter_3x3(frame)?;
                let cropped = preprocess::center_crop(&filtered, cfg.crop_size)?;
                let resized = preprocess::resize_bilinear(&cropped, cfg.target_size)?;
                kept.push(resized);
                accepted_indices.push(idx);
            }
            Err(reason) => {
                rejected[match reason {
                    RejectReason::Saturated => 0,
                    RejectReason::Dark => 1,
                    RejectReason::Blurry => 2,
                }] += 1;
            }
        }
    }
    if kept.is_empty() {
        return Err(CadxError::validation(
            "every frame of the volume was rejected by the quality gate",
        ));
    }
    let (centered, volume_mean) = preprocess::zero_center_volume(&kept)?;
    Ok(PreprocessedVolume {
        frames: centered,
        accepted_indices,
        volume_mean,
        rejected,
    })
}

/// Loads an entry's frame stack from disk.
pub fn load_volume_frames(
    manifest: &Manifest,
    root: &Path,
    entry: &ManifestEntry,
) -> Result<Vec<Frame2D>> {
    manifest
        .frame_paths(root, entry)
        .iter()
        .map(|p| crate::dataset::read_frame(p))
        .collect()
}

/// Evenly spaced subset of 0..n (all of them when count is 0 or >= n).
pub fn training_frame_indices(n: usize, count: usize) -> Vec<usize> {
    if count == 0 || count >= n {
        (0..n).collect()
    } else {
        (0..count).map(|i| i * n / count).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub cnn: CnnModel,
    pub svm: SvmModel,
    pub age_scaler: AgeScaler,
    pub loss_curve: Vec<f64>,
}

/// Fits the age scaler on the training patients only.
pub fn fit_age_scaler_on(entries: &[&ManifestEntry]) -> Result<AgeScaler> {
    let mut per_patient: BTreeMap<&str, u32> = BTreeMap::new();
    for e in entries {
        per_patient.insert(&e.patient_id, e.age);
    }
    let ages: Vec<u32> = per_patient.values().copied().collect();
    AgeScaler::fit(&ages)
}

/// Trains the feature extractor and fusion classifier on the given entries.
pub fn train_pipeline(
    manifest: &Manifest,
    root: &Path,
    entries: &[&ManifestEntry],
    config: &PipelineConfig,
    seed: u64,
) -> Result<TrainedPipeline> {
    config.validate()?;
    if entries.is_empty() {
        return Err(CadxError::validation("no training volumes"));
    }
    let age_scaler = fit_age_scaler_on(entries)?;

    // Collect the training frames (evenly spaced per volume) with their
    // volume metadata.
    let mut samples: Vec<(Frame2D, FineClass)> = Vec::new();
    let mut sample_meta: Vec<(f64, f64)> = Vec::new();
    for entry in entries {
        let raw = load_volume_frames(manifest, root, entry)?;
        let pre = preprocess_volume(&raw, &config.preproc)?;
        let picks = training_frame_indices(pre.frames.len(), config.train.cnn_frames_per_volume);
        let age_norm = age_scaler.normalize(entry.age);
        let hpv_enc = preprocess::encode_hpv(entry.hpv);
        for i in picks {
            samples.push((pre.frames[i].clone(), entry.label));
            sample_meta.push((age_norm, hpv_enc));
        }
    }

    let mut cnn = neuralnet::init_model(&config.net, rng_child(seed, 0x11))?;
    let loss_curve = neuralnet::train(
        &mut cnn,
        &samples,
        &config.adam,
        config.train.epochs,
        config.train.batch_size,
        rng_child(seed, 0x22),
    )?;

    // Fused 7-D features for the SVM from the same training frames.
    let mut features = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for ((frame, label), (age_norm, hpv_enc)) in samples.iter().zip(sample_meta.iter()) {
        let logits = neuralnet::extract_features(&cnn, frame)?;
        features.push(fuse(&logits, *age_norm, *hpv_enc)?.to_vec());
        labels.push(*label);
    }
    let svm = train_svm(&features, &labels, &config.svm)?;

    Ok(TrainedPipeline {
        cnn,
        svm,
        age_scaler,
        loss_curve,
    })
}

fn rng_child(seed: u64, label: u64) -> u64 {
    crate::rng::derive_seed(seed, label)
}

/// Volume-level inference output.
#[derive(Debug, Clone)]
pub struct VolumeInference {
    pub distribution: [f64; 5],
    pub fine: FineClass,
    pub p_high: f64,
    pub binary: GeneralClass,
    pub diagnostics: NumericDiagnostics,
}

/// Classifies one preprocessed volume: per-frame features, fusion, SVM,
/// then volume-level aggregation under the configured mode.
pub fn infer_volume(
    trained: &TrainedPipeline,
    pre: &PreprocessedVolume,
    age: u32,
    hpv: bool,
    config: &PipelineConfig,
) -> Result<VolumeInference> {
    let age_norm = trained.age_scaler.normalize(age);
    let hpv_enc = preprocess::encode_hpv(hpv);
    let mut diagnostics = NumericDiagnostics::default();
    let mut frame_labels = Vec::with_capacity(pre.frames.len());
    let mut frame_probs = Vec::with_capacity(pre.frames.len());
    for frame in &pre.frames {
        let trace = neuralnet::forward(&trained.cnn, frame)?;
        let softmax_err = (trace.probs().iter().sum::<f64>() - 1.0).abs();
        diagnostics.max_softmax_sum_err = diagnostics.max_softmax_sum_err.max(softmax_err);
        let fused = fuse(trace.logits(), age_norm, hpv_enc)?;
        frame_labels.push(trained.svm.predict_label(&fused)?);
        let probs = trained.svm.predict_proba(&fused)?;
        let svm_err = (probs.iter().sum::<f64>() - 1.0).abs();
        diagnostics.max_svm_prob_sum_err = diagnostics.max_svm_prob_sum_err.max(svm_err);
        frame_probs.push(probs);
    }

    let (distribution, fine, p_high) = match config.aggregate_mode {
        AggregateMode::Majority => {
            let dist = VolumeDistribution::from_labels(&frame_labels)?;
            (
                dist.probs(),
                dist.fine_decision(),
                dist.general_probability(GeneralClass::High),
            )
        }
        AggregateMode::MeanProb => {
            let mean = mean_probability_distribution(&frame_probs)?;
            let mut best = 0usize;
            for code in 1..5 {
                if mean[code] >= mean[best] {
                    best = code;
                }
            }
            let p_high = mean[3] + mean[4];
            (mean, FineClass::from_code(best as u8)?, p_high)
        }
    };
    let dist_err = (distribution.iter().sum::<f64>() - 1.0).abs();
    diagnostics.max_volume_dist_sum_err = diagnostics.max_volume_dist_sum_err.max(dist_err);

    let binary = if p_high > config.decision.threshold {
        GeneralClass::High
    } else {
        GeneralClass::Low
    };
    // Keep the count-based path consistent with the aggregate helpers.
    if config.aggregate_mode == AggregateMode::Majority {
        let dist = VolumeDistribution::from_labels(&frame_labels)?;
        debug_assert_eq!(binary, binary_decision(&dist, &config.decision));
    }

    Ok(VolumeInference {
        distribution,
        fine,
        p_high,
        binary,
        diagnostics,
    })
}

impl VolumeInference {
    pub fn to_prediction(&self, volume_id: &str, threshold: f64) -> VolumePrediction {
        VolumePrediction {
            version: 1,
            volume_id: volume_id.to_string(),
            distribution: self.distribution,
            fine_class: self.fine.code(),
            fine_class_name: self.fine.name().to_string(),
            p_high: self.p_high,
            binary: self.binary.name().to_string(),
            threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_phantom_dataset, PhantomConfig};

    #[test]
    fn training_frame_indices_even_spacing() {
        assert_eq!(training_frame_indices(8, 0), (0..8).collect::<Vec<_>>());
        assert_eq!(training_frame_indices(8, 10), (0..8).collect::<Vec<_>>());
        assert_eq!(training_frame_indices(8, 4), vec![0, 2, 4, 6]);
        assert_eq!(training_frame_indices(10, 3), vec![0, 3, 6]);
    }

    #[test]
    fn config_validation_ties_net_to_preproc() {
        let mut cfg = PipelineConfig::default();
        cfg.preproc.target_size = 32;
        cfg.preproc.crop_size = 32;
        assert!(cfg.validate().is_err());
        cfg.net.input_size = 32;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn preprocess_volume_counts_rejections() {
        let cfg = PreprocConfig::desk_scale();
        let good = Frame2D::filled(64, 64, 0.5); // constant -> blurry
        let mut textured = vec![0.0; 64 * 64];
        for (i, v) in textured.iter_mut().enumerate() {
            *v = if (i / 64 + i % 64) % 2 == 0 { 0.3 } else { 0.6 };
        }
        let keep = Frame2D::new(64, 64, textured).unwrap();
        let dark = Frame2D::filled(64, 64, 0.01);
        let out = preprocess_volume(&[good, keep, dark], &cfg).unwrap();
        assert_eq!(out.frames.len(), 1);
        assert_eq!(out.accepted_indices, vec![1]);
        assert_eq!(out.rejected, [0, 1, 1]);
    }

    #[test]
    fn all_rejected_is_an_error() {
        let cfg = PreprocConfig::desk_scale();
        let dark = Frame2D::filled(64, 64, 0.01);
        assert!(preprocess_volume(&[dark.clone(), dark], &cfg).is_err());
    }

    #[test]
    fn tiny_phantom_trains_and_infers() {
        let dir = tempfile::tempdir().unwrap();
        let phantom = PhantomConfig::uniform(2, 1, 1, 6, 32);
        let manifest = generate_phantom_dataset(&phantom, 11, dir.path()).unwrap();
        let mut config = PipelineConfig {
            folds: 2,
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
        let entries: Vec<&ManifestEntry> = manifest.entries.iter().collect();
        let trained = train_pipeline(&manifest, dir.path(), &entries, &config, 5).unwrap();
        assert_eq!(trained.loss_curve.len(), 2);
        assert!(trained.loss_curve.iter().all(|l| l.is_finite()));

        let entry = &manifest.entries[0];
        let raw = load_volume_frames(&manifest, dir.path(), entry).unwrap();
        let pre = preprocess_volume(&raw, &config.preproc).unwrap();
        let inference = infer_volume(&trained, &pre, entry.age, entry.hpv, &config).unwrap();
        let sum: f64 = inference.distribution.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(inference.diagnostics.worst() < 1e-12);
    }
}
