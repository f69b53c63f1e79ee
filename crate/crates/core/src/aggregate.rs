//! Multi-modal fusion and volume-level inference: 7-D fused features,
//! per-volume class distributions from frame votes, general-class
//! probabilities, majority decisions, and thresholded binary calls.

use crate::dataset::{FineClass, GeneralClass};
use crate::error::{CadxError, Result};
use serde::{Deserialize, Serialize};

/// Ordered concatenation [image(5), normalized age, HPV encoding].
pub fn fuse(image_feature: &[f64], age_norm: f64, hpv_enc: f64) -> Result<[f64; 7]> {
    if image_feature.len() != 5 {
        return Err(CadxError::validation(format!(
            "image feature must be 5-D, got {}",
            image_feature.len()
        )));
    }
    if image_feature.iter().any(|v| !v.is_finite())
        || !age_norm.is_finite()
        || !hpv_enc.is_finite()
    {
        return Err(CadxError::numeric("non-finite fusion input"));
    }
    Ok([
        image_feature[0],
        image_feature[1],
        image_feature[2],
        image_feature[3],
        image_feature[4],
        age_norm,
        hpv_enc,
    ])
}

/// Per-volume class distribution kept as exact frame counts so the derived
/// probabilities are rationals over a common denominator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeDistribution {
    pub counts: [u64; 5],
    pub total: u64,
}

impl VolumeDistribution {
    /// Indicator-mean over per-frame predicted labels:
    /// P(j) = #{i : y_i = j} / |y|.
    pub fn from_labels(labels: &[FineClass]) -> Result<VolumeDistribution> {
        if labels.is_empty() {
            return Err(CadxError::validation(
                "cannot build a distribution from no labels",
            ));
        }
        let mut counts = [0u64; 5];
        for l in labels {
            counts[l.code() as usize] += 1;
        }
        Ok(VolumeDistribution {
            counts,
            total: labels.len() as u64,
        })
    }

    pub fn probs(&self) -> [f64; 5] {
        let n = self.total as f64;
        [
            self.counts[0] as f64 / n,
            self.counts[1] as f64 / n,
            self.counts[2] as f64 / n,
            self.counts[3] as f64 / n,
            self.counts[4] as f64 / n,
        ]
    }

    /// Exact numerator of P(m) over the denominator `total`.
    pub fn general_count(&self, class: GeneralClass) -> u64 {
        class
            .subclasses()
            .iter()
            .map(|c| self.counts[c.code() as usize])
            .sum()
    }

    /// P(m) = sum of P(n) over the subclasses of m.
    pub fn general_probability(&self, class: GeneralClass) -> f64 {
        self.general_count(class) as f64 / self.total as f64
    }

    /// Argmax over frame counts; ties go to the higher (more severe) code.
    pub fn fine_decision(&self) -> FineClass {
        let mut best = 0usize;
        for code in 1..5 {
            if self.counts[code] >= self.counts[best] {
                best = code;
            }
        }
        FineClass::from_code(best as u8).expect("code in range")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinaryDecisionConfig {
    pub threshold: f64,
}

impl Default for BinaryDecisionConfig {
    fn default() -> Self {
        BinaryDecisionConfig { threshold: 0.5 }
    }
}

impl BinaryDecisionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CadxError::validation("threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// HIGH iff P(HIGH) is strictly larger than the threshold.
pub fn binary_decision(dist: &VolumeDistribution, config: &BinaryDecisionConfig) -> GeneralClass {
    if dist.general_probability(GeneralClass::High) > config.threshold {
        GeneralClass::High
    } else {
        GeneralClass::Low
    }
}

/// Off-by-default alternative to the indicator mean: averages per-frame
/// probability vectors instead of counting hard labels.
pub fn mean_probability_distribution(frame_probs: &[[f64; 5]]) -> Result<[f64; 5]> {
    if frame_probs.is_empty() {
        return Err(CadxError::validation(
            "cannot average probabilities over no frames",
        ));
    }
    let mut mean = [0.0f64; 5];
    for p in frame_probs {
        for (m, v) in mean.iter_mut().zip(p.iter()) {
            *m += v;
        }
    }
    let n = frame_probs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// The per-volume prediction record emitted by `predict`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumePrediction {
    pub version: u32,
    pub volume_id: String,
    pub distribution: [f64; 5],
    pub fine_class: u8,
    pub fine_class_name: String,
    pub p_high: f64,
    pub binary: String,
    pub threshold: f64,
}

impl VolumePrediction {
    pub fn from_distribution(
        volume_id: &str,
        dist: &VolumeDistribution,
        config: &BinaryDecisionConfig,
    ) -> VolumePrediction {
        let fine = dist.fine_decision();
        let binary = binary_decision(dist, config);
        VolumePrediction {
            version: 1,
            volume_id: volume_id.to_string(),
            distribution: dist.probs(),
            fine_class: fine.code(),
            fine_class_name: fine.name().to_string(),
            p_high: dist.general_probability(GeneralClass::High),
            binary: binary.name().to_string(),
            threshold: config.threshold,
        }
    }
}
