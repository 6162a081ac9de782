//! Server configuration from a TOML file, overridden by `ARTREC_*` variables.

use std::path::{Path, PathBuf};

use artrec_core::recsys::{FusionMode, DEFAULT_R};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("environment variable {key}: {reason}")]
    Env { key: String, reason: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingPaths {
    pub lda: Option<PathBuf>,
    pub bert: Option<PathBuf>,
    pub resnet: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub corpus: PathBuf,
    pub embeddings: EmbeddingPaths,
    /// Similarity-matrix cache files live here; rebuilt when stale.
    pub cache_dir: Option<PathBuf>,
    /// Event log and snapshots.
    pub data_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub images_dir: Option<PathBuf>,
    pub r: usize,
    pub fusion: FusionMode,
    pub bind: String,
    pub port: u16,
    pub admin_token: Option<String>,
    pub seed: u64,
    pub snapshot_every: u64,
    /// fsync every event before acknowledging it.
    pub durable: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("data/sample_corpus.jsonl"),
            embeddings: EmbeddingPaths::default(),
            cache_dir: None,
            data_dir: PathBuf::from("study-data"),
            static_dir: None,
            images_dir: None,
            r: DEFAULT_R,
            fusion: FusionMode::default(),
            bind: "127.0.0.1".into(),
            port: 8080,
            admin_token: None,
            seed: 0,
            snapshot_every: 100,
            durable: true,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Reads `path`; relative paths inside are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, path)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.data_dir);
        for p in [
            &mut self.embeddings.lda,
            &mut self.embeddings.bert,
            &mut self.embeddings.resnet,
            &mut self.cache_dir,
            &mut self.static_dir,
            &mut self.images_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Applies `ARTREC_*` overrides from the given variables.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        for (k, v) in vars {
            let key = k.as_ref();
            let Some(name) = key.strip_prefix("ARTREC_") else {
                continue;
            };
            let v: String = v.into();
            let parse_err = |reason: String| ConfigError::Env {
                key: key.to_string(),
                reason,
            };
            match name {
                "CORPUS" => self.corpus = v.into(),
                "EMBED_LDA" => self.embeddings.lda = Some(v.into()),
                "EMBED_BERT" => self.embeddings.bert = Some(v.into()),
                "EMBED_RESNET" => self.embeddings.resnet = Some(v.into()),
                "CACHE_DIR" => self.cache_dir = Some(v.into()),
                "DATA_DIR" => self.data_dir = v.into(),
                "STATIC_DIR" => self.static_dir = Some(v.into()),
                "IMAGES_DIR" => self.images_dir = Some(v.into()),
                "R" => self.r = v.parse().map_err(|e| parse_err(format!("{e}")))?,
                "FUSION" => self.fusion = v.parse().map_err(|e| parse_err(format!("{e}")))?,
                "BIND" => self.bind = v,
                "PORT" => self.port = v.parse().map_err(|e| parse_err(format!("{e}")))?,
                "ADMIN_TOKEN" => self.admin_token = Some(v),
                "SEED" => self.seed = v.parse().map_err(|e| parse_err(format!("{e}")))?,
                "SNAPSHOT_EVERY" => self.snapshot_every = v.parse().map_err(|e| parse_err(format!("{e}")))?,
                "DURABLE" => self.durable = v.parse().map_err(|e| parse_err(format!("{e}")))?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_env_and_file(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.r == 0 {
            return Err(ConfigError::Invalid("r must be ≥ 1".into()));
        }
        if let Some(t) = &self.admin_token {
            if t.trim().is_empty() {
                return Err(ConfigError::Invalid("admin_token must not be blank".into()));
            }
        }
        Ok(())
    }
}
