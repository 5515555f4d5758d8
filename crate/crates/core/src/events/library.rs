use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loudness::compute_loudness_proxy;
use super::synth::{synthesize_event, MIN_SAMPLE_RATE};
use super::taxonomy::{EventType, Taxonomy};
use crate::audio::{read_wav_mono16, wav_duration};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, label_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LibraryMode {
    Synthetic,
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceSource {
    Synthetic { seed: u64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventInstance {
    pub type_id: String,
    pub instance_index: u32,
    pub duration: f64,
    pub loudness: f64,
    pub source: InstanceSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub type_id: String,
    pub instance_index: u32,
    pub source_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sample_rate: u32,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLibrary {
    pub types: Vec<EventType>,
    pub instances: Vec<EventInstance>,
    pub sample_rate: u32,
    pub mode: LibraryMode,
}

impl EventLibrary {
    /// Synthesize `instances_per_type` instances of every taxonomy type.
    ///
    /// Duration and loudness are measured on the synthesized waveform, which
    /// is regenerated on demand by [`EventLibrary::waveform`].
    pub fn synthetic(
        taxonomy: &Taxonomy,
        instances_per_type: usize,
        sample_rate: u32,
        master_seed: u64,
    ) -> Result<Self> {
        taxonomy.validate()?;
        if instances_per_type == 0 {
            return Err(Error::InvalidArgument("instances_per_type must be >= 1".into()));
        }
        if sample_rate < MIN_SAMPLE_RATE {
            return Err(Error::InvalidArgument(format!(
                "sample rate {sample_rate} below {MIN_SAMPLE_RATE}"
            )));
        }
        let jobs: Vec<(&EventType, u32)> = taxonomy
            .types
            .iter()
            .flat_map(|ty| (0..instances_per_type as u32).map(move |i| (ty, i)))
            .collect();
        let instances = jobs
            .par_iter()
            .map(|&(ty, i)| {
                let seed = derive_seed(master_seed, &[label_seed(&ty.id), i as u64]);
                let wave = synthesize_event(ty, i, sample_rate, seed);
                EventInstance {
                    type_id: ty.id.clone(),
                    instance_index: i,
                    duration: wave.len() as f64 / sample_rate as f64,
                    loudness: compute_loudness_proxy(&wave, sample_rate),
                    source: InstanceSource::Synthetic { seed },
                }
            })
            .collect();
        let lib = EventLibrary {
            types: taxonomy.types.clone(),
            instances,
            sample_rate,
            mode: LibraryMode::Synthetic,
        };
        lib.validate()?;
        Ok(lib)
    }

    /// Load real recordings listed in a manifest. Paths are relative to the
    /// manifest's directory. Only taxonomy types with at least one entry
    /// become library types.
    pub fn load_manifest(path: &Path, taxonomy: &Taxonomy) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_manifest(&manifest, base, taxonomy)
    }

    pub fn from_manifest(manifest: &Manifest, base: &Path, taxonomy: &Taxonomy) -> Result<Self> {
        if manifest.entries.is_empty() {
            return Err(Error::Schema("no event types".into()));
        }
        for e in &manifest.entries {
            if taxonomy.get(&e.type_id).is_none() {
                return Err(Error::Schema(format!("unknown event type id {:?}", e.type_id)));
            }
        }
        let results: Vec<Result<EventInstance>> = manifest
            .entries
            .par_iter()
            .map(|e| {
                let full = base.join(&e.source_path);
                let (duration, sr) = wav_duration(&full)?;
                if sr != manifest.sample_rate {
                    return Err(Error::Audio {
                        path: full,
                        message: format!("sample rate {sr}, manifest declares {}", manifest.sample_rate),
                    });
                }
                let (samples, _) = read_wav_mono16(&full)?;
                if samples.is_empty() || duration <= 0.0 {
                    return Err(Error::Audio {
                        path: full,
                        message: "empty audio".into(),
                    });
                }
                Ok(EventInstance {
                    type_id: e.type_id.clone(),
                    instance_index: e.instance_index,
                    duration,
                    loudness: compute_loudness_proxy(&samples, sr),
                    source: InstanceSource::File { path: full },
                })
            })
            .collect();
        let mut instances = Vec::new();
        let mut failures = Vec::new();
        for (entry, r) in manifest.entries.iter().zip(results) {
            match r {
                Ok(inst) => instances.push(inst),
                Err(err) => failures.push(format!(
                    "{}#{}: {err}",
                    entry.type_id, entry.instance_index
                )),
            }
        }
        if !failures.is_empty() {
            return Err(Error::Audio {
                path: base.to_path_buf(),
                message: format!("{} unreadable entries: {}", failures.len(), failures.join("; ")),
            });
        }
        let used: HashSet<&str> = instances.iter().map(|i| i.type_id.as_str()).collect();
        let types = taxonomy
            .types
            .iter()
            .filter(|t| used.contains(t.id.as_str()))
            .cloned()
            .collect();
        let lib = EventLibrary {
            types,
            instances,
            sample_rate: manifest.sample_rate,
            mode: LibraryMode::Manifest,
        };
        lib.validate()?;
        Ok(lib)
    }

    pub fn validate(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::Schema("no event types".into()));
        }
        let mut seen = HashSet::new();
        for inst in &self.instances {
            if self.event_type(&inst.type_id).is_none() {
                return Err(Error::Schema(format!("unknown event type id {:?}", inst.type_id)));
            }
            if !seen.insert((inst.type_id.as_str(), inst.instance_index)) {
                return Err(Error::Schema(format!(
                    "duplicate instance {}#{}",
                    inst.type_id, inst.instance_index
                )));
            }
            if !(inst.duration > 0.0 && inst.duration.is_finite()) {
                return Err(Error::Schema(format!(
                    "{}#{}: duration {} not positive",
                    inst.type_id, inst.instance_index, inst.duration
                )));
            }
            if !(inst.loudness > 0.0 && inst.loudness.is_finite()) {
                return Err(Error::Schema(format!(
                    "{}#{}: loudness {} not positive",
                    inst.type_id, inst.instance_index, inst.loudness
                )));
            }
        }
        for ty in &self.types {
            if !self.instances.iter().any(|i| i.type_id == ty.id) {
                return Err(Error::Schema(format!("event type {} has no instances", ty.id)));
            }
        }
        Ok(())
    }

    pub fn event_type(&self, id: &str) -> Option<&EventType> {
        self.types.iter().find(|t| t.id == id)
    }

    pub fn instance(&self, type_id: &str, instance_index: u32) -> Option<&EventInstance> {
        self.instances
            .iter()
            .find(|i| i.type_id == type_id && i.instance_index == instance_index)
    }

    pub fn type_ids(&self) -> Vec<String> {
        self.types.iter().map(|t| t.id.clone()).collect()
    }

    pub fn waveform(&self, inst: &EventInstance) -> Result<Vec<f32>> {
        match &inst.source {
            InstanceSource::Synthetic { seed } => {
                let ty = self
                    .event_type(&inst.type_id)
                    .ok_or_else(|| Error::Schema(format!("unknown event type id {:?}", inst.type_id)))?;
                Ok(synthesize_event(ty, inst.instance_index, self.sample_rate, *seed))
            }
            InstanceSource::File { path } => Ok(read_wav_mono16(path)?.0),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lib: EventLibrary = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        lib.validate()?;
        Ok(lib)
    }
}
