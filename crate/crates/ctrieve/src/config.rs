//! Run configuration: a TOML file with every hyperparameter, overridable by
//! command-line flags.

use std::path::{Path, PathBuf};

use ctrieve_core::corpus::Split;
use ctrieve_core::loss::SimDirection;
use ctrieve_core::metrics::KeywordPool;
use ctrieve_core::model::Objective;
use ctrieve_core::text::{SamplerMode, TextEncoderVariant, DEFAULT_RANDOM_WORDS, DEFAULT_WINDOW};
use ctrieve_core::train::TrainConfig;
use ctrieve_core::vision::{AugmentationPolicy, DEFAULT_STANDARD_SIDE};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Contiguous,
    RandomWords,
}

/// Which manifest samples a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSelection {
    Train,
    Val,
    Test,
    All,
}

impl SplitSelection {
    pub fn admits(self, split: Split) -> bool {
        match self {
            SplitSelection::Train => split == Split::Train,
            SplitSelection::Val => split == Split::Val,
            SplitSelection::Test => split == Split::Test,
            SplitSelection::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patterns: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub sampler_mode: SamplerKind,
    /// Window length or word count; defaults to 100 (contiguous) or 64 (random words).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler_length: Option<usize>,
    pub sampler_enabled: bool,
    pub enable_mse: bool,
    pub encoder_variant: TextEncoderVariant,
    pub direction: SimDirection,
    /// Shared text and vision embedding width.
    pub dim: usize,
    pub patch: usize,
    /// Volumes are resized to this cube side before encoding.
    pub standard_side: usize,
    pub vocab_min_count: usize,
    pub keyword_pool: KeywordPool,
    pub train_split: SplitSelection,
    pub eval_split: SplitSelection,
    pub view_a: AugmentationPolicy,
    pub view_b: AugmentationPolicy,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            alpha: train.objective.alpha,
            tau: train.objective.tau,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            batch_size: train.batch_size,
            sampler_mode: SamplerKind::Contiguous,
            sampler_length: None,
            sampler_enabled: true,
            enable_mse: true,
            encoder_variant: TextEncoderVariant::Domain,
            direction: SimDirection::ImageToText,
            dim: 16,
            patch: 16,
            standard_side: DEFAULT_STANDARD_SIDE,
            vocab_min_count: 1,
            keyword_pool: KeywordPool::Labeled,
            train_split: SplitSelection::Train,
            eval_split: SplitSelection::Test,
            view_a: train.view_a,
            view_b: train.view_b,
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        let p = &mut cfg.paths;
        for slot in [&mut p.manifest, &mut p.vocab, &mut p.checkpoint, &mut p.patterns, &mut p.stopwords] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn sampler(&self) -> SamplerMode {
        match self.sampler_mode {
            SamplerKind::Contiguous => SamplerMode::Contiguous(self.sampler_length.unwrap_or(DEFAULT_WINDOW)),
            SamplerKind::RandomWords => SamplerMode::RandomWords(self.sampler_length.unwrap_or(DEFAULT_RANDOM_WORDS)),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            objective: Objective {
                alpha: self.alpha,
                tau: self.tau,
                enable_mse: self.enable_mse,
                direction: self.direction,
            },
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            sampler: self.sampler(),
            sampler_enabled: self.sampler_enabled,
            view_a: self.view_a,
            view_b: self.view_b,
        }
    }

    /// Checks value ranges and that every configured path exists.
    pub fn validate(&self) -> CliResult<()> {
        self.train_config().validate()?;
        if self.dim == 0 || self.patch == 0 || self.standard_side == 0 {
            return Err(CliError::config("dim, patch and standard_side must be at least 1"));
        }
        if self.standard_side % self.patch != 0 {
            return Err(CliError::config(format!(
                "standard_side {} is not divisible by patch {}",
                self.standard_side, self.patch
            )));
        }
        let p = &self.paths;
        for path in [&p.manifest, &p.vocab, &p.checkpoint, &p.patterns, &p.stopwords].into_iter().flatten() {
            if !path.exists() {
                return Err(CliError::config(format!("configured path {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses a single enum value through its serde name, for flag values.
pub fn parse_named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).map_err(|e| e.to_string())
}
