//! Synthetic phantom dataset generator.
//!
//! Stands in for clinical volumes: each tissue class gets a distinct,
//! separable 2-D motif, rendered per frame with multiplicative speckle and
//! small frame-to-frame jitter. Everything is a pure function of
//! (config, seed), so two runs produce byte-identical files.
//!
//! Class motifs:
//! * 0 normal    - bright epithelium band, thin dark boundary line, darker
//!   speckled stroma below
//! * 1 ectropion - curved bright papillary arcs on a plain stroma
//! * 2 LSIL      - layered like normal, plus an irregular hypo-intense patch
//!   in the lower third of the band
//! * 3 HSIL      - band irregularly thickened (thickness swings by more
//!   than a third), boundary line partially erased
//! * 4 cancer    - no layering; clusters of bright oval blobs

use super::{save_manifest, write_frame, FineClass, Frame2D, Manifest, ManifestEntry};
use crate::error::{CadxError, Result};
use crate::rng::{self, Rng};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub patients_per_class: [usize; 5],
    pub specimens_per_patient: usize,
    pub volumes_per_specimen: [usize; 5],
    pub frames_per_volume: usize,
    pub frame_size: usize,
}

impl Default for PhantomConfig {
    /// Volume counts echo the clinical class imbalance (20:8:4:6:16) at
    /// desk scale.
    fn default() -> Self {
        PhantomConfig {
            patients_per_class: [5, 4, 2, 3, 4],
            specimens_per_patient: 2,
            volumes_per_specimen: [2, 1, 1, 1, 2],
            frames_per_volume: 24,
            frame_size: 64,
        }
    }
}

impl PhantomConfig {
    /// Same patient/specimen/volume counts for every class.
    pub fn uniform(
        patients: usize,
        specimens_per_patient: usize,
        volumes_per_specimen: usize,
        frames_per_volume: usize,
        frame_size: usize,
    ) -> Self {
        PhantomConfig {
            patients_per_class: [patients; 5],
            specimens_per_patient,
            volumes_per_specimen: [volumes_per_specimen; 5],
            frames_per_volume,
            frame_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let any_zero = self.patients_per_class.contains(&0)
            || self.volumes_per_specimen.contains(&0)
            || self.specimens_per_patient == 0
            || self.frames_per_volume == 0;
        if any_zero {
            return Err(CadxError::validation("phantom config has zero counts"));
        }
        if self.frame_size < 16 {
            return Err(CadxError::validation(format!(
                "frame size {} too small; minimum 16",
                self.frame_size
            )));
        }
        Ok(())
    }

    pub fn total_volumes(&self) -> usize {
        (0..5)
            .map(|c| {
                self.patients_per_class[c] * self.specimens_per_patient
                    * self.volumes_per_specimen[c]
            })
            .sum()
    }
}

/// Age means per class; only the label correlation matters, the values are
/// synthetic.
const AGE_MEANS: [f64; 5] = [38.0, 34.0, 30.0, 36.0, 52.0];
const AGE_SD: f64 = 8.0;

/// HPV positivity rates: 0.9 for LSIL/HSIL/cancer, 0.2 for normal/ectropion.
fn hpv_rate(class: FineClass) -> f64 {
    match class {
        FineClass::Normal | FineClass::Ectropion => 0.2,
        _ => 0.9,
    }
}

/// Generates the dataset under `out_dir` (frames under `frames/`, manifest
/// at `manifest.json`) and returns the manifest.
pub fn generate_phantom_dataset(
    config: &PhantomConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest> {
    config.validate()?;
    let frames_dir = out_dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| CadxError::io(&frames_dir, e))?;

    let mut entries = Vec::with_capacity(config.total_volumes());
    for class in FineClass::ALL {
        let c = class.code() as usize;
        for p in 0..config.patients_per_class[c] {
            let patient_id = format!("p{c}-{p:02}");
            let patient_seed = rng::derive_seed(rng::derive_seed(seed, 0x10 + c as u64), p as u64);
            let mut meta_rng = rng::seeded(rng::derive_seed(patient_seed, 0xEE));
            let age = sample_age(&mut meta_rng, class);
            let hpv = rng::uniform(&mut meta_rng) < hpv_rate(class);

            for s in 0..config.specimens_per_patient {
                let specimen_id = format!("{patient_id}-s{s:02}");
                for v in 0..config.volumes_per_specimen[c] {
                    let volume_id = format!("{specimen_id}-v{v:02}");
                    let volume_seed = rng::derive_seed(
                        rng::derive_seed(patient_seed, s as u64),
                        0x100 + v as u64,
                    );
                    let dir = frames_dir.join(&volume_id);
                    std::fs::create_dir_all(&dir).map_err(|e| CadxError::io(&dir, e))?;
                    let mut frame_files = Vec::with_capacity(config.frames_per_volume);
                    let motif = Motif::sample(class, config.frame_size, volume_seed);
                    for f in 0..config.frames_per_volume {
                        let frame = motif.render_frame(f as u64);
                        let rel = format!("frames/{volume_id}/f{f:03}.pgm");
                        write_frame(&frame, &out_dir.join(&rel))?;
                        frame_files.push(rel);
                    }
                    entries.push(ManifestEntry {
                        volume_id,
                        specimen_id: specimen_id.clone(),
                        patient_id: patient_id.clone(),
                        label: class,
                        age,
                        hpv,
                        frames: frame_files,
                    });
                }
            }
        }
    }

    let manifest = Manifest::new(entries)?;
    save_manifest(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn sample_age(rng: &mut Rng, class: FineClass) -> u32 {
    let raw = AGE_MEANS[class.code() as usize] + AGE_SD * rng::gaussian(rng);
    raw.round().clamp(18.0, 90.0) as u32
}

/// Per-volume motif parameters, sampled once per volume so all of its frames
/// look like cross-sections through the same tissue.
#[derive(Debug, Clone)]
struct Motif {
    class: FineClass,
    size: usize,
    volume_seed: u64,
    /// Epithelium depth as a fraction of height (classes 0, 2, 3).
    band_depth: f64,
    /// Thickening modulation (class 3): amplitude, frequency, phase.
    thick_amp: f64,
    thick_freq: f64,
    thick_phase: f64,
    /// Boundary gap intervals in columns (class 3).
    gaps: Vec<(usize, usize)>,
    /// Hypo-intense patch (class 2): column start, width fraction, phase.
    patch_x0: f64,
    patch_w: f64,
    patch_phase: f64,
    /// Arc parameters (class 1): (cx, cy, rx, ry).
    arcs: Vec<(f64, f64, f64, f64)>,
    /// Blob parameters (class 4): (cx, cy, rx, ry).
    blobs: Vec<(f64, f64, f64, f64)>,
}

const BAND_INTENSITY: f64 = 0.58;
const BOUNDARY_INTENSITY: f64 = 0.06;
const STROMA_INTENSITY: f64 = 0.30;
const BACKGROUND_INTENSITY: f64 = 0.24;
const ARC_INTENSITY: f64 = 0.80;
const PATCH_INTENSITY: f64 = 0.10;
const BLOB_INTENSITY: f64 = 0.72;

impl Motif {
    fn sample(class: FineClass, size: usize, volume_seed: u64) -> Motif {
        let mut r = rng::seeded(rng::derive_seed(volume_seed, 0x5EED));
        let w = size as f64;
        let mut motif = Motif {
            class,
            size,
            volume_seed,
            band_depth: rng::uniform_in(&mut r, 0.36, 0.42),
            thick_amp: 0.0,
            thick_freq: 0.0,
            thick_phase: 0.0,
            gaps: Vec::new(),
            patch_x0: 0.0,
            patch_w: 0.0,
            patch_phase: 0.0,
            arcs: Vec::new(),
            blobs: Vec::new(),
        };
        match class {
            FineClass::Normal => {}
            FineClass::Ectropion => {
                let n = 4 + rng::index(&mut r, 4);
                for _ in 0..n {
                    let cx = rng::uniform_in(&mut r, 0.1 * w, 0.9 * w);
                    let cy = rng::uniform_in(&mut r, 0.35 * w, 0.75 * w);
                    let rx = rng::uniform_in(&mut r, 0.08 * w, 0.16 * w);
                    let ry = rng::uniform_in(&mut r, 0.12 * w, 0.24 * w);
                    motif.arcs.push((cx, cy, rx, ry));
                }
            }
            FineClass::Lsil => {
                motif.patch_x0 = rng::uniform_in(&mut r, 0.1, 0.55);
                motif.patch_w = rng::uniform_in(&mut r, 0.22, 0.34);
                motif.patch_phase = rng::uniform_in(&mut r, 0.0, std::f64::consts::TAU);
            }
            FineClass::Hsil => {
                motif.band_depth = rng::uniform_in(&mut r, 0.46, 0.54);
                motif.thick_amp = rng::uniform_in(&mut r, 0.14, 0.20);
                motif.thick_freq = rng::uniform_in(&mut r, 1.5, 2.8);
                motif.thick_phase = rng::uniform_in(&mut r, 0.0, std::f64::consts::TAU);
                // Erase the boundary over roughly half the width.
                let n_gaps = 2 + rng::index(&mut r, 3);
                for _ in 0..n_gaps {
                    let start = rng::index(&mut r, size);
                    let len = size / 8 + rng::index(&mut r, size / 6 + 1);
                    motif.gaps.push((start, (start + len).min(size)));
                }
            }
            FineClass::Cancer => {
                let n = 6 + rng::index(&mut r, 5);
                for _ in 0..n {
                    let cx = rng::uniform_in(&mut r, 0.08 * w, 0.92 * w);
                    let cy = rng::uniform_in(&mut r, 0.08 * w, 0.92 * w);
                    let rx = rng::uniform_in(&mut r, 0.05 * w, 0.11 * w);
                    let ry = rng::uniform_in(&mut r, 0.05 * w, 0.11 * w);
                    motif.blobs.push((cx, cy, rx, ry));
                }
            }
        }
        motif
    }

    fn render_frame(&self, frame_idx: u64) -> Frame2D {
        let size = self.size;
        let mut r = rng::seeded(rng::derive_seed(self.volume_seed, 0xF000 + frame_idx));
        // Small per-frame drift so adjacent cross-sections differ slightly.
        let jitter = rng::uniform_in(&mut r, -1.5, 1.5);
        let mut base = vec![0.0f64; size * size];

        match self.class {
            FineClass::Normal | FineClass::Lsil => {
                self.paint_layers(&mut base, jitter, |_| self.band_depth);
                if self.class == FineClass::Lsil {
                    self.paint_patch(&mut base, jitter);
                }
            }
            FineClass::Hsil => {
                let depth = |x: usize| {
                    self.band_depth
                        + self.thick_amp
                            * (self.thick_freq * std::f64::consts::TAU * x as f64
                                / size as f64
                                + self.thick_phase)
                                .sin()
                };
                self.paint_layers(&mut base, jitter, depth);
            }
            FineClass::Ectropion => {
                base.fill(BACKGROUND_INTENSITY);
                for &(cx, cy, rx, ry) in &self.arcs {
                    paint_arc(&mut base, size, cx + jitter, cy, rx, ry);
                }
            }
            FineClass::Cancer => {
                base.fill(BACKGROUND_INTENSITY);
                for &(cx, cy, rx, ry) in &self.blobs {
                    paint_blob(&mut base, size, cx + jitter, cy + jitter, rx, ry);
                }
            }
        }

        // Multiplicative speckle, then clamp.
        for v in base.iter_mut() {
            *v = (*v * rng::uniform_in(&mut r, 0.7, 1.3)).clamp(0.0, 1.0);
        }
        Frame2D::new(size, size, base).expect("rendered frame is valid")
    }

    /// Bright band, dark boundary of ~2 rows, stroma below; band depth per
    /// column given by `depth_frac`.
    fn paint_layers(&self, base: &mut [f64], jitter: f64, depth_frac: impl Fn(usize) -> f64) {
        let size = self.size;
        let line = (size / 32).max(1) + 1;
        for x in 0..size {
            let d = ((depth_frac(x) * size as f64) + jitter).round().max(2.0) as usize;
            let d = d.min(size - line - 2);
            let boundary_erased = self
                .gaps
                .iter()
                .any(|&(s, e)| x >= s && x < e);
            for y in 0..size {
                let v = if y < d {
                    BAND_INTENSITY
                } else if y < d + line {
                    if boundary_erased {
                        (BAND_INTENSITY + STROMA_INTENSITY) / 2.0
                    } else {
                        BOUNDARY_INTENSITY
                    }
                } else {
                    STROMA_INTENSITY
                };
                base[y * size + x] = v;
            }
        }
    }

    /// Irregular dark patch in the lower third of the band.
    fn paint_patch(&self, base: &mut [f64], jitter: f64) {
        let size = self.size;
        let band = self.band_depth * size as f64;
        let y0 = (band * 2.0 / 3.0) as usize;
        let y1 = (band as usize).min(size);
        let x0 = (self.patch_x0 * size as f64 + jitter).max(0.0) as usize;
        let width = (self.patch_w * size as f64) as usize;
        for y in y0..y1 {
            // Wavy edges.
            let wave =
                (3.0 * (y as f64 * 0.9 + self.patch_phase).sin()).round() as isize;
            let xs = (x0 as isize + wave).max(0) as usize;
            let xe = (xs + width).min(size);
            for x in xs..xe {
                base[y * size + x] = PATCH_INTENSITY;
            }
        }
    }
}

/// Upper-half elliptical arc with ~1.5 px stroke.
fn paint_arc(base: &mut [f64], size: usize, cx: f64, cy: f64, rx: f64, ry: f64) {
    for y in 0..size {
        let dy = y as f64 - cy;
        if dy > 0.0 {
            continue; // upper half only
        }
        for x in 0..size {
            let dx = x as f64 - cx;
            let q = (dx / rx) * (dx / rx) + (dy / ry) * (dy / ry);
            if (q - 1.0).abs() < 1.5 / rx.min(ry) {
                base[y * size + x] = ARC_INTENSITY;
            }
        }
    }
}

/// Filled oval blob.
fn paint_blob(base: &mut [f64], size: usize, cx: f64, cy: f64, rx: f64, ry: f64) {
    for y in 0..size {
        let dy = y as f64 - cy;
        for x in 0..size {
            let dx = x as f64 - cx;
            if (dx / rx) * (dx / rx) + (dy / ry) * (dy / ry) <= 1.0 {
                base[y * size + x] = BLOB_INTENSITY;
            }
        }
    }
}
