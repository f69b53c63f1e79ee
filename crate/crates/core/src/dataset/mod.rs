//! Dataset model: tissue classes, frames, volumes, patient metadata, the
//! on-disk manifest format, and the synthetic phantom generator.

mod manifest;
mod pgm;
mod phantom;

pub use manifest::{load_manifest, save_manifest, Manifest, ManifestEntry};
pub use pgm::{read_frame, write_frame};
pub use phantom::{generate_phantom_dataset, PhantomConfig};

use crate::error::{CadxError, Result};
use serde::{Deserialize, Serialize};

/// The five fine-grained tissue classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum FineClass {
    Normal = 0,
    Ectropion = 1,
    Lsil = 2,
    Hsil = 3,
    Cancer = 4,
}

impl FineClass {
    pub const ALL: [FineClass; 5] = [
        FineClass::Normal,
        FineClass::Ectropion,
        FineClass::Lsil,
        FineClass::Hsil,
        FineClass::Cancer,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(FineClass::Normal),
            1 => Ok(FineClass::Ectropion),
            2 => Ok(FineClass::Lsil),
            3 => Ok(FineClass::Hsil),
            4 => Ok(FineClass::Cancer),
            other => Err(CadxError::validation(format!(
                "fine class code {other} out of range 0..=4"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FineClass::Normal => "normal",
            FineClass::Ectropion => "ectropion",
            FineClass::Lsil => "lsil",
            FineClass::Hsil => "hsil",
            FineClass::Cancer => "cancer",
        }
    }

    pub fn general(self) -> GeneralClass {
        match self {
            FineClass::Normal | FineClass::Ectropion | FineClass::Lsil => GeneralClass::Low,
            FineClass::Hsil | FineClass::Cancer => GeneralClass::High,
        }
    }
}

impl TryFrom<u8> for FineClass {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, String> {
        FineClass::from_code(code).map_err(|e| e.to_string())
    }
}

impl From<FineClass> for u8 {
    fn from(c: FineClass) -> u8 {
        c.code()
    }
}

/// The two risk classes; low risk covers {normal, ectropion, LSIL} and high
/// risk covers {HSIL, cancer}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneralClass {
    Low,
    High,
}

impl GeneralClass {
    pub fn subclasses(self) -> &'static [FineClass] {
        match self {
            GeneralClass::Low => &[FineClass::Normal, FineClass::Ectropion, FineClass::Lsil],
            GeneralClass::High => &[FineClass::Hsil, FineClass::Cancer],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeneralClass::Low => "low",
            GeneralClass::High => "high",
        }
    }
}

/// A single grayscale frame, row-major, unit-interval intensities in memory.
///
/// Frames read from disk are always in [0, 1]; intermediate pipeline stages
/// (zero-centering) may hold values outside that range, which `write_frame`
/// rejects.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CadxError::validation("frame dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(CadxError::validation(format!(
                "frame data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CadxError::numeric("frame contains non-finite intensity"));
        }
        Ok(Frame2D {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Frame2D::new(width, height, vec![value; width * height]).expect("constant frame is valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// One 3-D volume: an ordered frame stack plus its identity chain and label.
#[derive(Debug, Clone)]
pub struct VolumeRecord {
    pub volume_id: String,
    pub specimen_id: String,
    pub patient_id: String,
    pub frames: Vec<Frame2D>,
    pub label: FineClass,
}

impl VolumeRecord {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(CadxError::validation(format!(
                "volume {} has no frames",
                self.volume_id
            )));
        }
        let (w, h) = (self.frames[0].width(), self.frames[0].height());
        if self
            .frames
            .iter()
            .any(|f| f.width() != w || f.height() != h)
        {
            return Err(CadxError::validation(format!(
                "volume {} mixes frame dimensions",
                self.volume_id
            )));
        }
        Ok(())
    }
}

/// Patient-level metadata used by the fusion classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientMeta {
    pub age: u32,
    pub hpv: bool,
}

impl PatientMeta {
    pub fn validate(&self) -> Result<()> {
        if self.age > 130 {
            return Err(CadxError::validation(format!(
                "implausible age {}",
                self.age
            )));
        }
        Ok(())
    }
}
