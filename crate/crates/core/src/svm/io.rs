//! SVM model file: magic "CSVM", little-endian u32 version, a
//! length-prefixed JSON header (config, gamma, scaler, classes, Platt
//! parameters, per-pair metadata), then one little-endian f64 blob per pair
//! holding the support vectors followed by their dual coefficients.

use super::{FeatureScaler, PairClassifier, PlattParams, SvmConfig, SvmModel};
use crate::dataset::FineClass;
use crate::error::{CadxError, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"CSVM";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    config: SvmConfig,
    gamma: f64,
    dim: usize,
    scaler: FeatureScaler,
    classes: Vec<FineClass>,
    platt: Vec<PlattParams>,
    pairs: Vec<PairHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairHeader {
    lo: FineClass,
    hi: FineClass,
    n_sv: usize,
    bias: f64,
}

pub fn save_svm_model(model: &SvmModel, path: &Path) -> Result<()> {
    let header = Header {
        version: VERSION,
        config: model.config,
        gamma: model.gamma,
        dim: model.dim,
        scaler: model.scaler.clone(),
        classes: model.classes.clone(),
        platt: model.platt.clone(),
        pairs: model
            .pairs
            .iter()
            .map(|p| PairHeader {
                lo: p.lo,
                hi: p.hi,
                n_sv: p.coefficients.len(),
                bias: p.bias,
            })
            .collect(),
    };
    let header_json = crate::canonical::to_canonical_string(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(header_json.as_bytes());
    for pair in &model.pairs {
        for &v in &pair.support_vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &v in &pair.coefficients {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| CadxError::io(path, e))?;
    file.write_all(&out).map_err(|e| CadxError::io(path, e))
}

pub fn load_svm_model(path: &Path) -> Result<SvmModel> {
    let bytes = std::fs::read(path).map_err(|e| CadxError::io(path, e))?;
    let fail = |msg: &str| CadxError::parse(path, msg);
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(fail("not a CSVM model file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(fail(&format!("unsupported model version {version}")));
    }
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + json_len {
        return Err(fail("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + json_len])
        .map_err(|e| fail(&format!("bad header JSON: {e}")))?;
    if header.platt.len() != header.classes.len() {
        return Err(fail("model lacks Platt calibration"));
    }
    let mut cursor = 16 + json_len;
    let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
        let need = count * 8;
        if bytes.len() < cursor + need {
            return Err(CadxError::parse(path, "truncated support-vector blob"));
        }
        let values = bytes[cursor..cursor + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += need;
        Ok(values)
    };
    let mut pairs = Vec::with_capacity(header.pairs.len());
    for ph in &header.pairs {
        let support_vectors = read_f64s(ph.n_sv * header.dim)?;
        let coefficients = read_f64s(ph.n_sv)?;
        pairs.push(PairClassifier {
            lo: ph.lo,
            hi: ph.hi,
            support_vectors,
            coefficients,
            bias: ph.bias,
        });
    }
    if cursor != bytes.len() {
        return Err(fail("trailing bytes after support vectors"));
    }
    Ok(SvmModel {
        config: header.config,
        gamma: header.gamma,
        dim: header.dim,
        scaler: header.scaler,
        classes: header.classes,
        pairs,
        platt: header.platt,
    })
}
