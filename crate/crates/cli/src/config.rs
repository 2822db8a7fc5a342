//! Experiment configuration: TOML file, command-line overrides, defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tevae::detect::ReverseWindowMethod;
use tevae::model::{ModelConfig, Variant};
use tevae::preprocess::WindowSizeConfig;
use tevae::syndata::{AnomalyCounts, DatasetConfig};
use tevae::train::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Dataset directory; `<output_dir>/data` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub generator: DatasetConfig,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dir: None,
            generator: DatasetConfig {
                cycle_classes: 4,
                duration_scale: 0.1,
                anomalies_per_class: AnomalyCounts {
                    wheel_diameter: 1,
                    recuperation_off: 1,
                    battery_simulator: 1,
                    cooling_loss: 1,
                },
                ..DatasetConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    /// Fixed window length; estimated from the training data when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    /// Shift between training and validation windows. Scoring always uses 1.
    pub train_shift: usize,
    pub max_lag: usize,
    pub min_window: usize,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let acf = WindowSizeConfig::default();
        Self {
            window: Some(64),
            train_shift: 24,
            max_lag: acf.max_lag,
            min_window: acf.min_window,
        }
    }
}

impl PreprocessSection {
    pub fn window_size_config(&self) -> WindowSizeConfig {
        WindowSizeConfig {
            max_lag: self.max_lag,
            min_window: self.min_window,
        }
    }
}

/// Model shape minus the data-dependent `window` and `channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub latent: usize,
    pub heads: usize,
    /// `floor(d_D / heads)`, at least 1, when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key_dim: Option<usize>,
    pub enc_hidden: (usize, usize),
    pub dec_hidden: (usize, usize),
    pub variant: Variant,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            latent: 8,
            heads: 8,
            key_dim: None,
            enc_hidden: (16, 8),
            dec_hidden: (8, 16),
            variant: Variant::Tevae,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self, window: usize, channels: usize) -> ModelConfig {
        ModelConfig {
            window,
            channels,
            latent: self.latent,
            heads: self.heads,
            key_dim: self.key_dim.unwrap_or((channels / self.heads.max(1)).max(1)),
            enc_hidden: self.enc_hidden,
            dec_hidden: self.dec_hidden,
            variant: self.variant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectSection {
    pub reverse: ReverseWindowMethod,
    pub batch: usize,
    /// Test sequences drawn as score plots by `evaluate`.
    pub plot_sequences: usize,
}

impl Default for DetectSection {
    fn default() -> Self {
        Self {
            reverse: ReverseWindowMethod::Mean,
            batch: tevae::detect::DEFAULT_SCORE_BATCH,
            plot_sequences: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub variants: Vec<Variant>,
    pub methods: Vec<ReverseWindowMethod>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            variants: vec![Variant::Tevae, Variant::Noma],
            methods: ReverseWindowMethod::ALL.to_vec(),
        }
    }
}

/// Everything one experiment needs. `train.seed` is replaced by each entry
/// of `seeds` in turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub data: DataSection,
    pub preprocess: PreprocessSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub detect: DetectSection,
    pub benchmark: BenchmarkSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs/default"),
            seeds: vec![0, 1, 2],
            data: DataSection::default(),
            preprocess: PreprocessSection::default(),
            model: ModelSection::default(),
            train: TrainConfig {
                max_epochs: 50,
                patience: 10,
                learning_rate: 3e-3,
                ..TrainConfig::default()
            },
            detect: DetectSection::default(),
            benchmark: BenchmarkSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Reads `path`; relative `output_dir` and `data.dir` are resolved
    /// against the current directory, not the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        if self.preprocess.train_shift == 0 {
            return bad("preprocess.train_shift must be at least 1");
        }
        if self.preprocess.window == Some(0) {
            return bad("preprocess.window must be positive");
        }
        if self.detect.batch == 0 {
            return bad("detect.batch must be at least 1");
        }
        if self.benchmark.variants.is_empty() || self.benchmark.methods.is_empty() {
            return bad("benchmark needs at least one variant and one method");
        }
        self.data.generator.validate()?;
        self.train.validate()?;
        self.model.resolve(self.preprocess.window.unwrap_or(1), 1).validate()?;
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data.dir.clone().unwrap_or_else(|| self.output_dir.join("data"))
    }
}

/// Command-line overrides; `None` keeps the file or default value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub reverse: Option<ReverseWindowMethod>,
    pub variant: Option<Variant>,
    pub key_dim: Option<usize>,
    pub latent: Option<usize>,
    pub window: Option<usize>,
    pub max_epochs: Option<usize>,
    pub budget_hours: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = &self.data_dir {
            cfg.data.dir = Some(v.clone());
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = self.reverse {
            cfg.detect.reverse = v;
        }
        if let Some(v) = self.variant {
            cfg.model.variant = v;
        }
        if let Some(v) = self.key_dim {
            cfg.model.key_dim = Some(v);
        }
        if let Some(v) = self.latent {
            cfg.model.latent = v;
        }
        if let Some(v) = self.window {
            cfg.preprocess.window = Some(v);
        }
        if let Some(v) = self.max_epochs {
            cfg.train.max_epochs = v;
        }
        if let Some(v) = self.budget_hours {
            cfg.data.generator.budget_hours = v;
        }
    }
}

/// Defaults, then `path` if given, then `overrides`.
pub fn resolve_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}
