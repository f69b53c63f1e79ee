//! Frame and metadata preparation: quality gating, median filtering, center
//! crop, bilinear resize, per-volume zero-centering, and the min-max age
//! scaler plus HPV encoding.
//!
//! Pipeline order is fixed: quality_gate -> median_filter_3x3 -> center_crop
//! -> resize_bilinear -> zero_center_volume (on resized frames).

use crate::dataset::Frame2D;
use crate::error::{CadxError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocConfig {
    pub crop_size: usize,
    pub target_size: usize,
    pub saturation_threshold: f64,
    pub darkness_threshold: f64,
    pub blur_threshold: f64,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        PreprocConfig {
            crop_size: 600,
            target_size: 224,
            saturation_threshold: 0.92,
            darkness_threshold: 0.05,
            blur_threshold: 1e-4,
        }
    }
}

impl PreprocConfig {
    /// CPU-friendly profile sized for the 64x64 phantom frames.
    pub fn desk_scale() -> Self {
        PreprocConfig {
            crop_size: 64,
            target_size: 64,
            ..PreprocConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.darkness_threshold
            && self.darkness_threshold < self.saturation_threshold
            && self.saturation_threshold < 1.0)
        {
            return Err(CadxError::validation(
                "need 0 < darkness_threshold < saturation_threshold < 1",
            ));
        }
        if self.target_size > self.crop_size {
            return Err(CadxError::validation(
                "target_size must not exceed crop_size",
            ));
        }
        if self.target_size == 0 {
            return Err(CadxError::validation("target_size must be positive"));
        }
        Ok(())
    }
}

/// Why the quality gate dropped a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RejectReason {
    Saturated,
    Dark,
    Blurry,
}

impl RejectReason {
    pub fn name(self) -> &'static str {
        match self {
            RejectReason::Saturated => "saturated",
            RejectReason::Dark => "dark",
            RejectReason::Blurry => "blurry",
        }
    }
}

/// Accepts or rejects a frame. Checks run in a fixed order: saturated,
/// then dark, then blurry (variance of the 3x3 Laplacian response).
pub fn quality_gate(frame: &Frame2D, config: &PreprocConfig) -> std::result::Result<(), RejectReason> {
    let mean = frame.mean();
    if mean > config.saturation_threshold {
        return Err(RejectReason::Saturated);
    }
    if mean < config.darkness_threshold {
        return Err(RejectReason::Dark);
    }
    if laplacian_variance(frame) < config.blur_threshold {
        return Err(RejectReason::Blurry);
    }
    Ok(())
}

/// Variance of the 4-neighbor Laplacian response, borders edge-replicated.
fn laplacian_variance(frame: &Frame2D) -> f64 {
    let (w, h) = (frame.width(), frame.height());
    let n = (w * h) as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let response = frame.get(up, x) + frame.get(down, x) + frame.get(y, left)
                + frame.get(y, right)
                - 4.0 * frame.get(y, x);
            sum += response;
            sum_sq += response * response;
        }
    }
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0)
}

/// 3x3 median filter with edge replication at the borders.
pub fn median_filter_3x3(frame: &Frame2D) -> Result<Frame2D> {
    let (w, h) = (frame.width(), frame.height());
    if w < 3 || h < 3 {
        return Err(CadxError::validation(
            "median filter needs a frame of at least 3x3",
        ));
    }
    let mut out = vec![0.0; w * h];
    let mut window = [0.0f64; 9];
    for y in 0..h {
        for x in 0..w {
            let mut k = 0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    window[k] = frame.get(sy, sx);
                    k += 1;
                }
            }
            window.sort_unstable_by(|a, b| a.total_cmp(b));
            out[y * w + x] = window[4];
        }
    }
    Frame2D::new(w, h, out)
}

/// Square center crop at offset (floor((H-size)/2), floor((W-size)/2)).
pub fn center_crop(frame: &Frame2D, size: usize) -> Result<Frame2D> {
    let (w, h) = (frame.width(), frame.height());
    if size == 0 {
        return Err(CadxError::validation("crop size must be positive"));
    }
    if w < size || h < size {
        return Err(CadxError::validation(format!(
            "frame {w}x{h} smaller than crop size {size}"
        )));
    }
    let top = (h - size) / 2;
    let left = (w - size) / 2;
    let mut out = Vec::with_capacity(size * size);
    for y in top..top + size {
        out.extend_from_slice(&frame.row(y)[left..left + size]);
    }
    Frame2D::new(size, size, out)
}

/// Bilinear resize of a square frame using the half-pixel-center convention:
/// source coordinate s = (d + 0.5) * (in/out) - 0.5, clamped to the borders.
pub fn resize_bilinear(frame: &Frame2D, target: usize) -> Result<Frame2D> {
    if target == 0 {
        return Err(CadxError::validation("resize target must be positive"));
    }
    if frame.width() != frame.height() {
        return Err(CadxError::validation(
            "resize expects a square frame (crop first)",
        ));
    }
    let n = frame.width();
    if target == n {
        return Ok(frame.clone());
    }
    let scale = n as f64 / target as f64;
    let mut out = Vec::with_capacity(target * target);
    // Precompute 1-D sample positions; rows and columns share them because
    // the frame is square.
    let mut lo = vec![0usize; target];
    let mut hi = vec![0usize; target];
    let mut frac = vec![0.0f64; target];
    for (d, ((l, h), f)) in lo.iter_mut().zip(hi.iter_mut()).zip(frac.iter_mut()).enumerate() {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        *l = s.floor() as usize;
        *h = (*l + 1).min(n - 1);
        *f = s - *l as f64;
    }
    for y in 0..target {
        let (y0, y1, fy) = (lo[y], hi[y], frac[y]);
        for x in 0..target {
            let (x0, x1, fx) = (lo[x], hi[x], frac[x]);
            let top = frame.get(y0, x0) * (1.0 - fx) + frame.get(y0, x1) * fx;
            let bottom = frame.get(y1, x0) * (1.0 - fx) + frame.get(y1, x1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Frame2D::new(target, target, out)
}

/// Subtracts the scalar mean over every pixel of every frame in the volume.
pub fn zero_center_volume(frames: &[Frame2D]) -> Result<(Vec<Frame2D>, f64)> {
    if frames.is_empty() {
        return Err(CadxError::validation("cannot zero-center an empty volume"));
    }
    let total: f64 = frames.iter().map(|f| f.data().iter().sum::<f64>()).sum();
    let count: usize = frames.iter().map(|f| f.data().len()).sum();
    let mean = total / count as f64;
    let centered = frames
        .iter()
        .map(|f| {
            let data = f.data().iter().map(|&v| v - mean).collect();
            Frame2D::new(f.width(), f.height(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((centered, mean))
}

/// Min-max age scaler, fit on training ages only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeScaler {
    pub min: u32,
    pub max: u32,
}

impl AgeScaler {
    pub fn fit(training_ages: &[u32]) -> Result<AgeScaler> {
        if training_ages.is_empty() {
            return Err(CadxError::validation(
                "cannot fit age scaler on an empty training set",
            ));
        }
        Ok(AgeScaler {
            min: *training_ages.iter().min().unwrap(),
            max: *training_ages.iter().max().unwrap(),
        })
    }

    /// x* = (x - min) / (max - min); ages outside the training range are
    /// clamped first, and a degenerate scaler (min == max) returns 0.5.
    pub fn normalize(&self, age: u32) -> f64 {
        if self.min == self.max {
            return 0.5;
        }
        let clamped = age.clamp(self.min, self.max);
        (clamped - self.min) as f64 / (self.max - self.min) as f64
    }
}

/// Boolean HPV result as a feature: negative -> 0.0, positive -> 1.0.
pub fn encode_hpv(hpv: bool) -> f64 {
    if hpv {
        1.0
    } else {
        0.0
    }
}
