//! The run manifest: per-stage records (timing, artifact, cache hits) kept
//! at the root of the output directory.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Artifact path, relative to the output directory.
    pub artifact: String,
    /// Content hash of the artifact file.
    pub fingerprint: String,
    pub seconds: f64,
    pub cache_hit: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_fingerprint: String,
    pub dataset_fingerprint: String,
    /// Keyed by stage name, e.g. `extract` or `vectorize/betti-concat`.
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(config_fingerprint: String, dataset_fingerprint: String) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_fingerprint,
            dataset_fingerprint,
            stages: BTreeMap::new(),
        }
    }

    /// Load the manifest from `out_dir`, or start a fresh one. A manifest
    /// recorded under a different configuration is discarded: its cached
    /// stage notes would describe artifacts this run will not reuse.
    pub fn load_or_new(
        out_dir: &Path,
        config_fingerprint: String,
        dataset_fingerprint: String,
    ) -> Self {
        let path = out_dir.join(MANIFEST_NAME);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(m) = serde_json::from_str::<RunManifest>(&text) {
                if m.config_fingerprint == config_fingerprint
                    && m.dataset_fingerprint == dataset_fingerprint
                {
                    return m;
                }
                log::warn!(
                    "manifest at {} was recorded under a different configuration; starting fresh",
                    path.display()
                );
            }
        }
        RunManifest::new(config_fingerprint, dataset_fingerprint)
    }

    pub fn record(&mut self, stage: &str, record: StageRecord) {
        self.stages.insert(stage.to_string(), record);
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
