//! Model checkpoint format: magic "CADX", little-endian u32 version, a
//! length-prefixed config JSON, then the parameter tensors as little-endian
//! f32 blobs in topology order (weights before bias per layer).

use super::{init_model, CnnModel, NetConfig};
use crate::error::{CadxError, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"CADX";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &CnnModel, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config_json = crate::canonical::to_canonical_string(model.config())?;
    out.extend_from_slice(&(config_json.len() as u64).to_le_bytes());
    out.extend_from_slice(config_json.as_bytes());
    for (_, tensor) in model.param_tensors() {
        for &v in tensor {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| CadxError::io(path, e))?;
    file.write_all(&out).map_err(|e| CadxError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<CnnModel> {
    let mut file = std::fs::File::open(path).map_err(|e| CadxError::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| CadxError::io(path, e))?;
    let fail = |msg: &str| CadxError::parse(path, msg);

    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(fail("not a CADX checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(fail(&format!("unsupported checkpoint version {version}")));
    }
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + json_len {
        return Err(fail("truncated config block"));
    }
    let config: NetConfig = serde_json::from_slice(&bytes[16..16 + json_len])
        .map_err(|e| fail(&format!("bad config JSON: {e}")))?;
    config.validate()?;

    // Build the shape via init and overwrite every tensor from the blob.
    let mut model = init_model(&config, 0)?;
    let mut cursor = 16 + json_len;
    for (_, tensor) in model.param_tensors_mut() {
        let need = tensor.len() * 4;
        if bytes.len() < cursor + need {
            return Err(CadxError::parse(path, "truncated parameter blob"));
        }
        for v in tensor.iter_mut() {
            let raw: [u8; 4] = bytes[cursor..cursor + 4].try_into().unwrap();
            *v = f32::from_le_bytes(raw) as f64;
            cursor += 4;
        }
    }
    if cursor != bytes.len() {
        return Err(CadxError::parse(path, "trailing bytes after parameters"));
    }
    if !model.all_finite() {
        return Err(CadxError::numeric("checkpoint contains non-finite values"));
    }
    Ok(model)
}
