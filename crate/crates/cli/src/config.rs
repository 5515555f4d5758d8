use std::path::{Path, PathBuf};

use audioqa_core::clips::{ClipConfig, SplitConfig};
use audioqa_core::features::FeatureConfig;
use audioqa_core::models::{ModelConfig, ModelKind, ModulationOrder, TrainConfig};
use audioqa_core::nn::Hyperparams;
use audioqa_core::questions::{Attempts, GenerationConfig};
use audioqa_core::rng::{derive_seed, label_seed};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibraryConfig {
    pub instances_per_type: usize,
    pub sample_rate: u32,
    /// Multiplies every taxonomy duration range. Below 1 gives shorter clips.
    pub duration_scale: f64,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig {
            instances_per_type: 8,
            sample_rate: 16000,
            duration_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Counts {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

impl Default for Counts {
    fn default() -> Self {
        Counts {
            n_train: 80,
            n_val: 10,
            n_test: 10,
        }
    }
}

/// Model choice in the terms a user picks it; expanded to a full
/// [`ModelConfig`] once the question vocabulary is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// FiLM layers, or MALiMo blocks. Ignored by the FCN.
    pub units: usize,
    pub controller_hidden: usize,
    pub order: ModulationOrder,
    pub scale: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Malimo,
            units: 1,
            controller_hidden: 512,
            order: ModulationOrder::QuestionThenAudio,
            scale: 8,
        }
    }
}

impl ModelSpec {
    pub fn build(&self, vocab_size: usize, init_seed: u64) -> ModelConfig {
        let base = match self.kind {
            ModelKind::Fcn => ModelConfig::fcn(),
            ModelKind::Film => ModelConfig::film(self.units, self.controller_hidden, vocab_size),
            ModelKind::Malimo => ModelConfig {
                controller_hidden: self.controller_hidden,
                order: self.order,
                ..ModelConfig::malimo(self.units, vocab_size)
            },
        };
        ModelConfig {
            init_seed,
            ..base.with_scale(self.scale)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub logistic: Hyperparams,
    /// Logistic training stops once the epoch loss moves less than this
    /// over five epochs.
    pub tolerance: f64,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            logistic: Hyperparams {
                learning_rate: 1e-2,
                epochs: 400,
                ..Hyperparams::default()
            },
            tolerance: 1e-5,
            batch_size: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every stage's output.
    pub output: PathBuf,
    /// Replacement taxonomy; the built-in 20 types otherwise.
    pub taxonomy: Option<PathBuf>,
    /// Use recordings listed in this manifest instead of synthesized events.
    pub manifest: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub master_seed: u64,
    /// One training question per clip.
    pub low_resource: bool,
    pub library: LibraryConfig,
    pub counts: Counts,
    pub clip: ClipConfig,
    pub questions: GenerationConfig,
    pub features: FeatureConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output: PathBuf::from("run"),
            taxonomy: None,
            manifest: None,
            catalog: None,
            synonyms: None,
            master_seed: 0,
            low_resource: false,
            library: LibraryConfig::default(),
            counts: Counts::default(),
            clip: ClipConfig::default(),
            questions: GenerationConfig::default(),
            features: FeatureConfig::default(),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            Some(&mut cfg.output),
            cfg.taxonomy.as_mut(),
            cfg.manifest.as_mut(),
            cfg.catalog.as_mut(),
            cfg.synonyms.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            n_train: self.counts.n_train,
            n_val: self.counts.n_val,
            n_test: self.counts.n_test,
            master_seed: self.master_seed,
            clip: self.clip.clone(),
        }
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            attempts: if self.low_resource {
                Attempts::LOW_RESOURCE
            } else {
                self.questions.attempts
            },
            master_seed: self.master_seed,
            ..self.questions.clone()
        }
    }

    pub fn seed_for(&self, what: &str) -> u64 {
        derive_seed(self.master_seed, &[label_seed(what)])
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed_for("train"),
            ..self.train.clone()
        }
    }
}
