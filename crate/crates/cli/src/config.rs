//! JSON run configuration. Command-line flags override file values.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use headline_cnn::embeddings::EmbeddingMode;
use headline_cnn::grid::GridAxes;
use headline_cnn::network::{Head, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub headlines: PathBuf,
    pub prices: PathBuf,
    #[serde(default)]
    pub pretrained: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub p: usize,
    /// Padded length; the longest training headline when absent.
    #[serde(default)]
    pub m: Option<usize>,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    #[serde(default = "default_pool")]
    pub pool_w: usize,
    pub hidden: (usize, usize),
    #[serde(default = "default_head")]
    pub head: Head,
}

fn default_pool() -> usize {
    2
}

fn default_head() -> Head {
    Head::Binary
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    pub mode: EmbeddingMode,
    /// Normal initialization for self-learnt tables without a pretrained file.
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "default_std")]
    pub std: f64,
}

fn default_std() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_threshold")]
    pub class_threshold: f64,
}

fn default_batch() -> usize {
    32
}

fn default_lr() -> f64 {
    1e-3
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub start: f64,
    pub end: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    /// Defaults to the model head.
    #[serde(default)]
    pub head: Option<Head>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
}

impl Default for StrategySection {
    fn default() -> Self {
        StrategySection {
            head: None,
            threshold: default_threshold(),
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub epochs: Vec<usize>,
    pub dropout: Vec<f64>,
    pub widths: Vec<Vec<usize>>,
    pub modes: Vec<EmbeddingMode>,
    pub total_filters: usize,
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
    /// Rank cells on the test split instead of a validation slice.
    #[serde(default)]
    pub select_on_test: bool,
}

fn default_validation() -> f64 {
    0.1
}

impl GridSection {
    pub fn axes(&self) -> GridAxes {
        GridAxes {
            epochs: self.epochs.clone(),
            dropout: self.dropout.clone(),
            widths: self.widths.clone(),
            modes: self.modes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub portfolio: Vec<String>,
    #[serde(default = "default_relevance")]
    pub min_relevance: f64,
    pub model: ModelSection,
    pub embedding: EmbeddingSection,
    pub training: TrainingSection,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default)]
    pub grid: Option<GridSection>,
}

fn default_relevance() -> f64 {
    1.0
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub mode: Option<EmbeddingMode>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(seed) = overrides.seed {
            cfg.training.seed = Some(seed);
        }
        if let Some(mode) = overrides.mode {
            cfg.embedding.mode = mode;
        }
        // Relative paths resolve against the config file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.paths.headlines);
        resolve(&mut cfg.paths.prices);
        if let Some(p) = cfg.paths.pretrained.as_mut() {
            resolve(p);
        }
        match &overrides.out_dir {
            Some(dir) => cfg.paths.out_dir = dir.clone(),
            None => resolve(&mut cfg.paths.out_dir),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.training.seed.is_none() {
            bail!("a seed is required: set training.seed or pass --seed");
        }
        for (what, p) in [("headlines", &self.paths.headlines), ("prices", &self.paths.prices)] {
            if !p.is_file() {
                bail!("{what} file {} does not exist", p.display());
            }
        }
        let needs_file = self.embedding.mode.uses_pretrained()
            || self
                .grid
                .as_ref()
                .is_some_and(|g| g.modes.iter().any(|m| m.uses_pretrained()));
        match &self.paths.pretrained {
            Some(p) if !p.is_file() => bail!("pretrained vectors file {} does not exist", p.display()),
            None if needs_file => bail!("embedding mode {} needs paths.pretrained", self.embedding.mode.as_str()),
            _ => {}
        }
        if self.portfolio.is_empty() {
            bail!("portfolio must list at least one ticker");
        }
        if !(0.0..=1.0).contains(&self.min_relevance) {
            bail!("min_relevance {} outside [0, 1]", self.min_relevance);
        }
        if self.training.batch_size == 0 {
            bail!("training.batch_size must be >= 1");
        }
        if !(self.training.lr >= 0.0) {
            bail!("training.lr must be >= 0");
        }
        if let Some(s) = &self.strategy.sweep {
            if !(s.step > 0.0) || s.end < s.start {
                bail!("strategy.sweep needs start <= end and step > 0");
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.training.seed.expect("validated")
    }

    pub fn portfolio(&self) -> BTreeSet<String> {
        self.portfolio.iter().cloned().collect()
    }

    /// Full model configuration once the padded length is known.
    pub fn model_config(&self, m: usize) -> ModelConfig {
        ModelConfig {
            p: self.model.p,
            m,
            filter_widths: self.model.filter_widths.clone(),
            filters_per_width: self.model.filters_per_width,
            pool_w: self.model.pool_w,
            hidden: self.model.hidden,
            dropout_rate: self.training.dropout,
            head: self.model.head,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        std::fs::write(dir.join("h.csv"), "x").unwrap();
        std::fs::write(dir.join("p.csv"), "x").unwrap();
        let path = dir.join("run.json");
        std::fs::write(&path, body).unwrap();
        path
    }

    const BASE: &str = r#"{
  "paths": { "headlines": "h.csv", "prices": "p.csv" },
  "portfolio": ["AA"],
  "model": { "p": 4, "filter_widths": [2], "filters_per_width": 2, "hidden": [2, 1] },
  "embedding": { "mode": "self_learnt" },
  "training": { "epochs": 1, "seed": 3 }
}"#;

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::load(&write(dir.path(), BASE), &Overrides::default()).unwrap();
        assert_eq!(cfg.paths.headlines, dir.path().join("h.csv"));
        assert_eq!(cfg.paths.out_dir, dir.path().join("out"));
        assert_eq!(cfg.training.batch_size, 32);
        assert_eq!(cfg.model.pool_w, 2);
        assert_eq!(cfg.model.head, Head::Binary);
        assert_eq!(cfg.strategy.threshold, 0.5);
        assert_eq!(cfg.min_relevance, 1.0);
        assert_eq!(cfg.model_config(7).m, 7);
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), BASE);
        let cfg = RunConfig::load(
            &path,
            &Overrides {
                seed: Some(99),
                out_dir: Some(PathBuf::from("elsewhere")),
                mode: Some(EmbeddingMode::SelfLearnt),
            },
        )
        .unwrap();
        assert_eq!(cfg.seed(), 99);
        assert_eq!(cfg.paths.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bad = [
            BASE.replace(r#", "seed": 3"#, ""),
            BASE.replace(r#"["AA"]"#, "[]"),
            BASE.replace(r#""epochs": 1"#, r#""epochs": 1, "typo": 2"#),
            BASE.replace("self_learnt", "static"),
            BASE.replace("h.csv", "missing.csv"),
            BASE.replace(r#""epochs": 1"#, r#""epochs": 1, "batch_size": 0"#),
        ];
        for body in bad {
            assert!(
                RunConfig::load(&write(dir.path(), &body), &Overrides::default()).is_err(),
                "{body}"
            );
        }
    }
}
