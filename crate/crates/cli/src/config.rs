//! Run configuration: one JSON document mirroring the pipeline config plus
//! optional default paths. Flags override file values; the effective config
//! is echoed into every output directory. Unknown keys are rejected.

use cadx_core::pipeline::PipelineConfig;
use cadx_core::{CadxError, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunPaths {
    pub dataset_root: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub paths: RunPaths,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            paths: RunPaths::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CadxError::io(path, e))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| CadxError::parse(path, e.to_string()))?;
        if config.version != CONFIG_VERSION {
            return Err(CadxError::validation(format!(
                "unsupported config version {}",
                config.version
            )));
        }
        config.pipeline.validate()?;
        Ok(config)
    }

    /// File config when given, built-in defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    /// Echoes the effective configuration into an output directory.
    pub fn echo_into(&self, dir: &Path) -> Result<()> {
        cadx_core::canonical::write_canonical_file(&dir.join("config.json"), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let config = RunConfig::default();
        config.pipeline.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"version":1,"pipeline":{"seed":1,"bogus":2}}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
        let text = r#"{"version":1,"surprise":true}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn round_trips_through_canonical_json() {
        let config = RunConfig::default();
        let text = cadx_core::canonical::to_canonical_string(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }
}
