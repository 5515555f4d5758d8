use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fcn,
    Film,
    Malimo,
}

/// Which controller modulates the first FiLM layer of each MALiMo block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationOrder {
    QuestionThenAudio,
    AudioThenQuestion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// VGG-style blocks before the modulated stack (5 for the FCN, 3 otherwise).
    pub stem_blocks: usize,
    pub stem_base_filters: usize,
    pub stem_max_filters: usize,
    /// FiLM layers for FiLM, blocks (two FiLM layers each) for MALiMo.
    pub modulated_units: usize,
    pub modulated_filters: usize,
    pub controller_hidden: usize,
    pub controller_layers: usize,
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub classes: usize,
    pub head_filters: usize,
    pub head_hidden: usize,
    pub fcn_penultimate: usize,
    /// First conv kernel and stride as (frequency, time).
    pub first_kernel: (usize, usize),
    pub first_stride: (usize, usize),
    pub first_pad: (usize, usize),
    /// Mean-pool window and stride feeding the audio controller.
    pub audio_pool: usize,
    pub order: ModulationOrder,
    /// Divides every filter / unit count, for desk-sized runs.
    pub scale: usize,
    pub n_mels: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Malimo,
            stem_blocks: 3,
            stem_base_filters: 32,
            stem_max_filters: 512,
            modulated_units: 1,
            modulated_filters: 128,
            controller_hidden: 512,
            controller_layers: 2,
            embed_dim: 256,
            vocab_size: 0,
            classes: 36,
            head_filters: 512,
            head_hidden: 1024,
            fcn_penultimate: 1024,
            first_kernel: (3, 12),
            first_stride: (1, 9),
            first_pad: (1, 0),
            audio_pool: 8,
            order: ModulationOrder::QuestionThenAudio,
            scale: 1,
            n_mels: 64,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn fcn() -> Self {
        ModelConfig {
            kind: ModelKind::Fcn,
            stem_blocks: 5,
            modulated_units: 0,
            ..Default::default()
        }
    }

    pub fn film(layers: usize, hidden: usize, vocab_size: usize) -> Self {
        ModelConfig {
            kind: ModelKind::Film,
            modulated_units: layers,
            controller_hidden: hidden,
            vocab_size,
            ..Default::default()
        }
    }

    pub fn malimo(blocks: usize, vocab_size: usize) -> Self {
        ModelConfig {
            kind: ModelKind::Malimo,
            modulated_units: blocks,
            vocab_size,
            ..Default::default()
        }
    }

    pub fn with_scale(mut self, scale: usize) -> Self {
        self.scale = scale.max(1);
        self
    }

    /// `n / scale`, at least 1.
    pub fn scaled(&self, n: usize) -> usize {
        (n / self.scale.max(1)).max(1)
    }

    /// Number of FiLM layers in the modulated stack.
    pub fn film_layers(&self) -> usize {
        match self.kind {
            ModelKind::Fcn => 0,
            ModelKind::Film => self.modulated_units,
            ModelKind::Malimo => 2 * self.modulated_units,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: String| Err(crate::Error::InvalidArgument(m));
        match self.kind {
            ModelKind::Film if !(1..=12).contains(&self.modulated_units) => {
                return bad(format!("FiLM needs 1..=12 modulated layers, got {}", self.modulated_units))
            }
            ModelKind::Malimo if !(1..=6).contains(&self.modulated_units) => {
                return bad(format!("MALiMo needs 1..=6 blocks, got {}", self.modulated_units))
            }
            ModelKind::Film | ModelKind::Malimo if self.vocab_size < 2 => {
                return bad("question models need a vocabulary".into())
            }
            _ => {}
        }
        if self.classes == 0 || self.stem_blocks == 0 {
            return bad("classes and stem_blocks must be positive".into());
        }
        Ok(())
    }
}
