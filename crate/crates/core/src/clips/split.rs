use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::annotation::{sequence_key, ClipAnnotation};
use super::render::{plan_clip, render_annotation, sample_event_sequence};
use super::ClipConfig;
use crate::audio::write_wav_mono16;
use crate::error::{Error, Result};
use crate::events::EventLibrary;
use crate::rng::{label_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    #[serde(rename = "val")]
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn label(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "val",
            SplitName::Test => "test",
        }
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub clip: ClipConfig,
}

impl SplitConfig {
    pub fn count(&self, split: SplitName) -> usize {
        match split {
            SplitName::Train => self.n_train,
            SplitName::Validation => self.n_val,
            SplitName::Test => self.n_test,
        }
    }
}

/// An annotated clip plus the seed of its noise stream; enough to render
/// the waveform without keeping it in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPlan {
    pub annotation: ClipAnnotation,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub clips: Vec<ClipPlan>,
}

impl DatasetSplit {
    pub fn annotations(&self) -> Vec<ClipAnnotation> {
        self.clips.iter().map(|c| c.annotation.clone()).collect()
    }

    /// Render every clip to `<dir>/<clip_id>.wav`, in parallel.
    pub fn render_to_dir(&self, library: &EventLibrary, snr_db: f64, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.clips.par_iter().try_for_each(|c| {
            let wave = render_annotation(&c.annotation, library, snr_db, c.noise_seed)?;
            let path = dir.join(format!("{}.wav", c.annotation.clip_id));
            write_wav_mono16(&path, &wave, library.sample_rate)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: DatasetSplit,
    pub validation: DatasetSplit,
    pub test: DatasetSplit,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &DatasetSplit {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &DatasetSplit> {
        [&self.train, &self.validation, &self.test].into_iter()
    }
}

pub fn clip_id(split: SplitName, index: usize) -> String {
    format!("{}_{index:06}", split.label())
}

/// Build the three splits. Per-clip randomness derives from
/// `(master_seed, split, clip index, retry)`, so the result does not depend
/// on thread count.
pub fn generate_split(cfg: &SplitConfig, library: &EventLibrary) -> Result<Splits> {
    if cfg.n_train == 0 || cfg.n_val == 0 || cfg.n_test == 0 {
        return Err(Error::InvalidArgument("split counts must be >= 1".into()));
    }
    let train = build(cfg, library, SplitName::Train, None)?;
    let keys: HashSet<Vec<(String, u32)>> = train
        .clips
        .iter()
        .map(|c| sequence_key(&c.annotation))
        .collect();
    let validation = build(cfg, library, SplitName::Validation, Some(&keys))?;
    let test = build(cfg, library, SplitName::Test, Some(&keys))?;
    Ok(Splits {
        train,
        validation,
        test,
    })
}

fn build(
    cfg: &SplitConfig,
    library: &EventLibrary,
    split: SplitName,
    forbidden: Option<&HashSet<Vec<(String, u32)>>>,
) -> Result<DatasetSplit> {
    let n = cfg.count(split);
    let split_seed = label_seed(split.label());

    // Exactly floor(n/2) noisy clips, positions chosen by a seeded shuffle.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(cfg.master_seed, &[split_seed, label_seed("noise")]));
    let mut noisy = vec![false; n];
    for &i in &order[..n / 2] {
        noisy[i] = true;
    }

    let clips = (0..n)
        .into_par_iter()
        .map(|idx| {
            let id = clip_id(split, idx);
            for retry in 0..=cfg.clip.dedup_retries {
                let mut rng = rng_from(cfg.master_seed, &[split_seed, idx as u64, retry as u64]);
                let seq = sample_event_sequence(library, &mut rng, &cfg.clip)?;
                let annotation = plan_clip(&seq, library, &mut rng, noisy[idx], &id, &cfg.clip)?;
                if forbidden.is_some_and(|f| f.contains(&sequence_key(&annotation))) {
                    continue;
                }
                return Ok(ClipPlan {
                    annotation,
                    noise_seed: rng.random(),
                });
            }
            Err(Error::Generation(format!(
                "{split} clip {idx}: duplicate of a training sequence after {} retries",
                cfg.clip.dedup_retries
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetSplit { name: split, clips })
}
