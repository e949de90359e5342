//! Run configuration (TOML file + flag overrides) and content fingerprints.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use topodigit::filtration::FiltrationConfig;
use topodigit::imageio::{load_idx_images, load_idx_labels, subset, LabeledDataset};
use topodigit::learn::TrainConfig;
use topodigit::vectorize::{Strategy, VectorizerConfig, VectorizerKind};

/// Environment variable that overrides the configured dataset directory.
pub const DATA_ENV: &str = "TOPODIGIT_DATA";

/// One vectorizer entry in the config: a kind plus optional parameter
/// overrides on top of that kind's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizerSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl VectorizerSpec {
    pub fn plain(kind: &str) -> Self {
        VectorizerSpec {
            kind: kind.into(),
            resolution: None,
            layers: None,
            power: None,
            sigma: None,
        }
    }

    pub fn to_config(&self) -> Result<VectorizerConfig> {
        let kind = VectorizerKind::from_str(&self.kind).map_err(anyhow::Error::msg)?;
        let mut cfg = VectorizerConfig::new(kind);
        if let Some(r) = self.resolution {
            cfg.resolution = r;
        }
        if let Some(l) = self.layers {
            cfg.layers = l;
        }
        if let Some(p) = self.power {
            cfg.power = p;
        }
        if let Some(s) = self.sigma {
            cfg.sigma = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Full pipeline configuration. Every field has a default, so an empty TOML
/// file (or none at all) is a valid starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory holding `train-images-idx3-ubyte` / `train-labels-idx1-ubyte`.
    pub data_dir: PathBuf,
    /// Stratified subset sizes drawn from the dataset.
    pub train: usize,
    pub test: usize,
    pub subset_seed: u64,
    /// Foreground threshold used when binarizing images.
    pub binarize_threshold: f64,
    pub filtration: FiltrationConfig,
    pub vectorizers: Vec<VectorizerSpec>,
    pub strategies: Vec<String>,
    pub train_config: TrainConfig,
    pub folds: usize,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data_dir: PathBuf::from("data/mnist"),
            train: 5625,
            test: 625,
            subset_seed: 1,
            binarize_threshold: 0.4,
            filtration: FiltrationConfig::default(),
            vectorizers: vec![
                VectorizerSpec::plain("betti"),
                VectorizerSpec::plain("landscape"),
                VectorizerSpec::plain("silhouette"),
                VectorizerSpec::plain("persistence-image"),
                VectorizerSpec::plain("heat-kernel"),
            ],
            strategies: vec!["h0".into(), "h1".into(), "fused".into(), "concat".into()],
            train_config: TrainConfig {
                seed: 17,
                ..TrainConfig::default()
            },
            folds: 10,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train == 0 {
            bail!("config: train subset size must be positive");
        }
        if self.folds < 2 {
            bail!("config: folds must be at least 2");
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            bail!("config: binarize_threshold must lie strictly between 0 and 1");
        }
        for spec in &self.vectorizers {
            spec.to_config()
                .with_context(|| format!("config: vectorizer '{}'", spec.kind))?;
        }
        for s in &self.strategies {
            Strategy::from_str(s)
                .map_err(anyhow::Error::msg)
                .with_context(|| format!("config: strategy '{s}'"))?;
        }
        // The filtration must keep binarization in sync with the top level.
        Ok(())
    }

    /// The effective dataset directory after the environment override.
    pub fn resolved_data_dir(&self) -> PathBuf {
        match std::env::var_os(DATA_ENV) {
            Some(dir) => PathBuf::from(dir),
            None => self.data_dir.clone(),
        }
    }

    /// Load the IDX files and draw the configured stratified subset.
    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        let dir = self.resolved_data_dir();
        let images_path = dir.join("train-images-idx3-ubyte");
        let labels_path = dir.join("train-labels-idx1-ubyte");
        let images = load_idx_images(&images_path)
            .with_context(|| format!("loading {}", images_path.display()))?;
        let labels = load_idx_labels(&labels_path)
            .with_context(|| format!("loading {}", labels_path.display()))?;
        let full = LabeledDataset::new(images, labels);
        let ds = subset(&full, self.train, self.test, self.subset_seed)
            .with_context(|| "drawing the configured subset")?;
        Ok(ds)
    }

    /// The filtration config with the top-level binarize threshold applied.
    pub fn effective_filtration(&self) -> FiltrationConfig {
        FiltrationConfig {
            binarize_threshold: self.binarize_threshold,
            ..self.filtration.clone()
        }
    }

    /// Content hash of the effective configuration (canonical JSON).
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&json)
    }
}

fn hex_of(digest: impl AsRef<[u8]>) -> String {
    let mut s = String::with_capacity(64);
    for b in digest.as_ref() {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn hex_digest(bytes: &[u8]) -> String {
    hex_of(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex_digest(&bytes))
}

/// Content hash of the drawn subset: image pixels and labels in dataset
/// order, so any change to the selection or the underlying data shows up.
pub fn dataset_fingerprint(ds: &LabeledDataset) -> String {
    let mut hasher = Sha256::new();
    hasher.update((ds.images.len() as u64).to_le_bytes());
    for (img, &label) in ds.images.iter().zip(&ds.labels) {
        hasher.update((img.width as u32).to_le_bytes());
        hasher.update((img.height as u32).to_le_bytes());
        hasher.update([label]);
        for &v in &img.values {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher.update((ds.train_indices.len() as u64).to_le_bytes());
    hasher.update((ds.test_indices.len() as u64).to_le_bytes());
    hex_of(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.fingerprint(), back.fingerprint());
    }

    #[test]
    fn empty_toml_gives_defaults() {
        let cfg: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn bad_vectorizer_not_accepted() {
        let cfg: PipelineConfig =
            toml::from_str("[[vectorizers]]\nkind = \"warp-curve\"\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_changes() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.train = 100;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
