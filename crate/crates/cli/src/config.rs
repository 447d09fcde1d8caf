//! Experiment configuration files (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sepforge_core::signal::wav::WavFormat;
use sepforge_core::signal::SynthConfig;
use sepforge_core::train::TrainConfig;
use sepforge_core::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// One experiment: model, training schedule, dataset and root seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream (data, initialisation, batching,
    /// early-break sampling).
    pub seed: u64,
    /// Where `train` writes its outputs when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset directory holding `train.jsonl`, `val.jsonl` and `test.jsonl`.
    pub dir: PathBuf,
    pub synth: SynthConfig,
    pub train_examples: usize,
    pub val_examples: usize,
    pub test_examples: usize,
    /// Overlap ratios of the sparse evaluation subsets; none when empty.
    pub sparse_ratios: Vec<f64>,
    /// Examples per sparse subset.
    pub sparse_examples: usize,
    pub wav_format: WavFormat,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            synth: SynthConfig::default(),
            train_examples: 500,
            val_examples: 50,
            test_examples: 50,
            sparse_ratios: Vec::new(),
            sparse_examples: 50,
            wav_format: WavFormat::Float32,
        }
    }
}

impl DataConfig {
    pub fn manifest(&self, split: &str) -> PathBuf {
        self.dir.join(format!("{split}.jsonl"))
    }
}

impl ExperimentConfig {
    /// Reads and validates a config file. Relative paths inside it are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.data.dir = base.join(&cfg.data.dir);
        if let Some(out) = &cfg.out_dir {
            cfg.out_dir = Some(base.join(out));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            bail!(UsageError(format!("seed {} does not fit a TOML integer", self.seed)));
        }
        if self.data.synth.seed != 0 && self.data.synth.seed != self.seed {
            bail!(UsageError(
                "data.synth.seed is taken from the experiment seed; remove it or make them equal".into()
            ));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.data.synth.validate()?;
        if self.data.synth.num_sources != self.model.separator.n_sources {
            bail!(UsageError(format!(
                "data has {} sources but the model separates {}",
                self.data.synth.num_sources, self.model.separator.n_sources
            )));
        }
        if self.data.sparse_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            bail!(UsageError("sparse_ratios must lie in [0, 1]".into()));
        }
        if !self.data.sparse_ratios.is_empty() && self.data.synth.num_sources != 2 {
            bail!(UsageError("sparse subsets need exactly two sources".into()));
        }
        Ok(())
    }

    /// Fails unless the training and validation manifests exist.
    pub fn check_dataset(&self) -> Result<()> {
        for split in ["train", "val"] {
            let m = self.data.manifest(split);
            if !m.is_file() {
                bail!(UsageError(format!(
                    "missing manifest {} (run `sepforge synth` first)",
                    m.display()
                )));
            }
        }
        Ok(())
    }

    /// TOML text of the fully resolved config, with absolute paths.
    pub fn to_toml(&self) -> Result<String> {
        let mut snapshot = self.clone();
        snapshot.data.synth.seed = self.seed;
        snapshot.data.dir = absolute(&self.data.dir)?;
        if let Some(out) = &self.out_dir {
            snapshot.out_dir = Some(absolute(out)?);
        }
        toml::to_string(&snapshot).context("serialising the resolved config")
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}
