//! Dataset manifest: the JSON index that ties volumes, labels, metadata and
//! frame files together.

use super::{FineClass, PatientMeta};
use crate::canonical;
use crate::error::{CadxError, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub volume_id: String,
    pub specimen_id: String,
    pub patient_id: String,
    pub label: FineClass,
    pub age: u32,
    pub hpv: bool,
    /// Frame file paths, in stack order, relative to the manifest directory
    /// unless absolute.
    pub frames: Vec<String>,
}

impl ManifestEntry {
    pub fn meta(&self) -> PatientMeta {
        PatientMeta {
            age: self.age,
            hpv: self.hpv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(mut entries: Vec<ManifestEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.volume_id.cmp(&b.volume_id));
        let m = Manifest {
            version: MANIFEST_VERSION,
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    /// Structural validation; frame file existence is checked separately at
    /// load time because it depends on the manifest's directory.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(CadxError::validation(format!(
                "unsupported manifest version {}",
                self.version
            )));
        }
        if self.entries.is_empty() {
            return Err(CadxError::validation("empty manifest"));
        }
        let mut volume_ids = HashMap::new();
        let mut specimen_patients: HashMap<&str, &str> = HashMap::new();
        let mut patient_meta: HashMap<&str, PatientMeta> = HashMap::new();
        for e in &self.entries {
            if volume_ids.insert(&e.volume_id, ()).is_some() {
                return Err(CadxError::validation(format!(
                    "duplicate volume_id {}",
                    e.volume_id
                )));
            }
            if e.frames.is_empty() {
                return Err(CadxError::validation(format!(
                    "volume {} lists no frames",
                    e.volume_id
                )));
            }
            match specimen_patients.insert(&e.specimen_id, &e.patient_id) {
                Some(prev) if prev != e.patient_id => {
                    return Err(CadxError::validation(format!(
                        "specimen/patient conflict: specimen {} appears under patients {} and {}",
                        e.specimen_id, prev, e.patient_id
                    )));
                }
                _ => {}
            }
            let meta = e.meta();
            meta.validate()?;
            match patient_meta.insert(&e.patient_id, meta) {
                Some(prev) if prev != meta => {
                    return Err(CadxError::validation(format!(
                        "patient metadata conflict for {}",
                        e.patient_id
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Resolves an entry's frame paths against the manifest directory.
    pub fn frame_paths(&self, root: &Path, entry: &ManifestEntry) -> Vec<PathBuf> {
        entry
            .frames
            .iter()
            .map(|f| {
                let p = Path::new(f);
                if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    root.join(p)
                }
            })
            .collect()
    }

    /// Distinct specimen ids, sorted.
    pub fn specimen_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .entries
            .iter()
            .map(|e| e.specimen_id.clone())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn total_volumes(&self) -> usize {
        self.entries.len()
    }
}

/// Loads and fully validates a manifest, including frame file existence.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CadxError::io(path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CadxError::parse(path, e.to_string()))?;
    manifest.validate()?;
    let root = path.parent().unwrap_or_else(|| Path::new("."));
    for entry in &manifest.entries {
        for frame_path in manifest.frame_paths(root, entry) {
            if !frame_path.is_file() {
                return Err(CadxError::validation(format!(
                    "volume {} references missing frame file {}",
                    entry.volume_id,
                    frame_path.display()
                )));
            }
        }
    }
    Ok(manifest)
}

/// Writes the manifest in canonical form (entries sorted by volume id, keys
/// sorted, LF newlines).
pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut sorted = manifest.clone();
    sorted.entries.sort_by(|a, b| a.volume_id.cmp(&b.volume_id));
    canonical::write_canonical_file(path, &sorted)
}
