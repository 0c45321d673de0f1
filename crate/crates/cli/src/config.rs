//! Application config: a TOML file, overridden by environment variables,
//! overridden by command-line flags. Relative paths in the file resolve
//! against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fcheck_core::reasoners::{ReasonerConfig, ReasonerKind};
use fcheck_core::retrieval::RetrievalConfig;
use fcheck_core::veracity::VeracityKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Replay a recorded transcript.
    Scripted,
    /// Call the live endpoint.
    Live,
    /// Call the live endpoint and append new exchanges to the transcript.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub transcript: PathBuf,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Scripted,
            transcript: PathBuf::from("transcripts/default.jsonl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Defaults {
    pub reasoner: ReasonerKind,
    pub veracity: VeracityKind,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            reasoner: ReasonerKind::Corag,
            veracity: VeracityKind::CotCove,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub cache_root: Option<PathBuf>,
    pub traces_root: PathBuf,
    pub prompts_dir: Option<PathBuf>,
    pub corpus_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            cache_root: None,
            traces_root: PathBuf::from("traces"),
            prompts_dir: None,
            corpus_dir: PathBuf::from("corpus"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub provider: ProviderSettings,
    pub retrieval: RetrievalConfig,
    pub reasoning: ReasonerConfig,
    pub defaults: Defaults,
    pub paths: Paths,
    pub workers: usize,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            provider: ProviderSettings::default(),
            retrieval: RetrievalConfig::default(),
            reasoning: ReasonerConfig::default(),
            defaults: Defaults::default(),
            paths: Paths::default(),
            workers: 4,
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl AppConfig {
    /// Reads `path`, or returns defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: AppConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.provider.transcript);
        rebase(base, &mut cfg.paths.traces_root);
        rebase(base, &mut cfg.paths.corpus_dir);
        for p in [&mut cfg.paths.cache_root, &mut cfg.paths.prompts_dir]
            .into_iter()
            .flatten()
        {
            rebase(base, p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.retrieval.validate().map_err(anyhow::Error::msg)?;
        self.reasoning.validate().map_err(anyhow::Error::msg)?;
        anyhow::ensure!(self.workers >= 1, "workers must be at least 1");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_pipeline_values() {
        let c = AppConfig::default();
        assert_eq!(c.reasoning.max_steps, 6);
        assert_eq!(c.reasoning.branch_factor, 3);
        assert_eq!(c.retrieval.max_results, 10);
        assert_eq!(c.retrieval.window_days, 730);
        assert_eq!(c.retrieval.blocklist.len(), 7);
    }

    #[test]
    fn file_paths_resolve_against_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fcheck.toml");
        std::fs::write(
            &p,
            "workers = 2\n[paths]\ncorpus_dir = \"c\"\ncache_root = \"/abs/cache\"\n[defaults]\nreasoner = \"torag\"\n[retrieval]\nmax_results = 5\n",
        )
        .unwrap();
        let c = AppConfig::load(Some(&p)).unwrap();
        assert_eq!(c.workers, 2);
        assert_eq!(c.paths.corpus_dir, dir.path().join("c"));
        assert_eq!(c.paths.cache_root, Some(PathBuf::from("/abs/cache")));
        assert_eq!(c.defaults.reasoner, ReasonerKind::Torag);
        assert_eq!(c.retrieval.max_results, 5);
        assert_eq!(c.retrieval.window_days, 730);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fcheck.toml");
        std::fs::write(&p, "wokers = 2\n").unwrap();
        assert!(AppConfig::load(Some(&p)).is_err());
    }
}
