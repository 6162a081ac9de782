//! Pipeline configuration: the server settings plus LDA, c-TF-IDF and overlap
//! options, all optional in the TOML file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use artrec_core::ctfidf::{CtfidfConfig, NMode};
use artrec_core::lda::LdaConfig;
use artrec_core::metrics::DEFAULT_RBO_P;
use artrec_core::textprep::DEFAULT_MIN_COUNT;
use artrec_service::ServiceConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct LdaSection {
    pub k: usize,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: Option<usize>,
    pub min_count: usize,
    pub n_top: usize,
}

impl Default for LdaSection {
    fn default() -> Self {
        let d = LdaConfig::default();
        Self {
            k: d.k,
            alpha: None,
            beta: d.beta,
            iterations: d.iterations,
            burn_in: None,
            min_count: DEFAULT_MIN_COUNT,
            n_top: 10,
        }
    }
}

impl LdaSection {
    pub fn to_config(&self, seed: u64) -> LdaConfig {
        let mut c = LdaConfig::with_k(self.k);
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        c.beta = self.beta;
        c.iterations = self.iterations;
        c.burn_in = self.burn_in.unwrap_or(self.iterations / 2);
        c.seed = seed;
        c
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct CtfidfSection {
    pub target_dim: usize,
    pub min_cluster_size: usize,
    pub cutoff_quantile: f64,
    pub n_mode: NMode,
    pub log_base: Option<f64>,
    pub top_n: usize,
}

impl Default for CtfidfSection {
    fn default() -> Self {
        let d = CtfidfConfig::default();
        Self {
            target_dim: d.target_dim,
            min_cluster_size: d.min_cluster_size,
            cutoff_quantile: d.cutoff_quantile,
            n_mode: d.n_mode,
            log_base: d.log_base,
            top_n: 10,
        }
    }
}

impl CtfidfSection {
    pub fn to_config(&self) -> CtfidfConfig {
        CtfidfConfig {
            target_dim: self.target_dim,
            min_cluster_size: self.min_cluster_size,
            cutoff_quantile: self.cutoff_quantile,
            n_mode: self.n_mode,
            log_base: self.log_base,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub service: ServiceConfig,
    pub stopwords: Option<PathBuf>,
    pub rbo_p: f64,
    pub out: Option<PathBuf>,
    pub lda: LdaSection,
    pub ctfidf: CtfidfSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            service: ServiceConfig::default(),
            stopwords: None,
            rbo_p: DEFAULT_RBO_P,
            out: None,
            lda: LdaSection::default(),
            ctfidf: CtfidfSection::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads the file (relative paths resolve against its directory), then
    /// applies `ARTREC_*` environment overrides.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut cfg: PipelineConfig =
                    toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                if let Some(base) = p.parent() {
                    cfg.service.resolve_relative(base);
                    for q in [&mut cfg.stopwords, &mut cfg.out].into_iter().flatten() {
                        if q.is_relative() {
                            *q = base.join(&*q);
                        }
                    }
                }
                cfg
            }
            None => Self::default(),
        };
        cfg.service.apply_env(std::env::vars())?;
        Ok(cfg)
    }
}
