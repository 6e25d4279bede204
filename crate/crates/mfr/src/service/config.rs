use std::path::{Path, PathBuf};

use mfr_core::DetectorParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {key}: {value:?}")]
    Env { key: &'static str, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Service settings. Every field has a default, so an empty file is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    /// Credentials file; without one every caller is `public`.
    pub tokens: Option<PathBuf>,
    /// Match threshold. When unset it is calibrated from the enrolled gallery.
    pub threshold: Option<f64>,
    /// Eigenmodel file; defaults to `<data_dir>/model.mfem`.
    pub model: Option<PathBuf>,
    pub top_n: usize,
    /// fsync every commit.
    pub sync_writes: bool,
    pub snapshot_every: u64,
    pub detector: DetectorParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            tokens: None,
            threshold: None,
            model: None,
            top_n: 5,
            sync_writes: true,
            snapshot_every: crate::registry::DEFAULT_SNAPSHOT_EVERY,
            detector: DetectorParams::default(),
        }
    }
}

impl ServiceConfig {
    /// Reads `path` (if any), then applies `MF_*` environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                toml::from_str(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("MF_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = get("MF_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("MF_TOKENS") {
            self.tokens = Some(v.into());
        }
        if let Some(v) = get("MF_THRESHOLD") {
            let t = v.parse().map_err(|_| ConfigError::Env {
                key: "MF_THRESHOLD",
                value: v.clone(),
            })?;
            self.threshold = Some(t);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.threshold.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return Err(ConfigError::Invalid("threshold must be positive".into()));
        }
        if self.top_n == 0 {
            return Err(ConfigError::Invalid("top_n must be at least 1".into()));
        }
        if self.snapshot_every == 0 {
            return Err(ConfigError::Invalid(
                "snapshot_every must be at least 1".into(),
            ));
        }
        self.detector
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("detector: {e}")))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model
            .clone()
            .unwrap_or_else(|| self.data_dir.join("model.mfem"))
    }

    pub fn store_dir(&self) -> PathBuf {
        self.data_dir.join("registry")
    }

    pub fn blob_dir(&self) -> PathBuf {
        self.data_dir.join("blobs")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let cfg: ServiceConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, ServiceConfig::default());
    }

    #[test]
    fn env_overrides_file() {
        let mut cfg: ServiceConfig =
            toml::from_str("listen = \"0.0.0.0:1\"\nthreshold = 3.5\n").unwrap();
        cfg.apply_env(|k| match k {
            "MF_LISTEN" => Some("127.0.0.1:9".into()),
            "MF_THRESHOLD" => Some("7.25".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.listen, "127.0.0.1:9");
        assert_eq!(cfg.threshold, Some(7.25));
        assert!(cfg
            .apply_env(|k| (k == "MF_THRESHOLD").then(|| "abc".to_string()))
            .is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(toml::from_str::<ServiceConfig>("bogus = 1").is_err());
        let cfg: ServiceConfig = toml::from_str("threshold = -1.0").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: ServiceConfig =
            toml::from_str("[detector]\nscales = []\nedge_percentile = 85.0\nscore_threshold = 0.3\nnms_overlap = 0.3")
                .unwrap();
        assert!(cfg.validate().is_err());
    }
}
