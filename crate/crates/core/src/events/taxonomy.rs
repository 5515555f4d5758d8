use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN_TAXONOMY: &str = include_str!("../../data/taxonomy.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Continuity {
    /// Back-to-back repetitions are heard as separate events.
    Discrete,
    /// Back-to-back repetitions merge, so same-type adjacency is forbidden.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Noise,
    Tone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    Impulsive,
    Sustained,
    Swell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub kind: ComponentKind,
    pub hz: f64,
    pub gain: f64,
}

/// Spectral signature used by the synthesizer: a dominant component at
/// `primary_hz` plus weaker extras, shaped by an amplitude envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub primary_hz: f64,
    pub primary: ComponentKind,
    pub envelope: Envelope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_hz: Option<f64>,
    #[serde(default)]
    pub extras: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventType {
    pub id: String,
    pub source: String,
    pub action: String,
    pub continuity: Continuity,
    pub duration_range_s: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<Signature>,
}

impl EventType {
    pub fn name(&self) -> String {
        format!("{} {}", self.source, self.action)
    }

    pub fn is_continuous(&self) -> bool {
        self.continuity == Continuity::Continuous
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub types: Vec<EventType>,
}

impl Taxonomy {
    /// The shipped 20-type taxonomy.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TAXONOMY, Path::new("<builtin taxonomy>"))
            .expect("builtin taxonomy is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut tax: Taxonomy = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
        tax.fill_signatures();
        tax.validate()?;
        Ok(tax)
    }

    /// Types without an explicit signature get a log-spaced default.
    fn fill_signatures(&mut self) {
        for (k, ty) in self.types.iter_mut().enumerate() {
            if ty.signature.is_none() {
                ty.signature = Some(Signature {
                    primary_hz: 60.0 * 1.29f64.powi(k as i32),
                    primary: ComponentKind::Noise,
                    envelope: Envelope::Sustained,
                    pulse_hz: None,
                    extras: Vec::new(),
                });
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::Schema("no event types".into()));
        }
        let mut ids = HashSet::new();
        let mut names = HashSet::new();
        for ty in &self.types {
            if !ids.insert(ty.id.as_str()) {
                return Err(Error::Schema(format!("duplicate event type id {:?}", ty.id)));
            }
            if !names.insert((ty.source.as_str(), ty.action.as_str())) {
                return Err(Error::Schema(format!(
                    "duplicate event type {:?} {:?}",
                    ty.source, ty.action
                )));
            }
            let [lo, hi] = ty.duration_range_s;
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Schema(format!(
                    "{}: bad duration range [{lo}, {hi}]",
                    ty.id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.types.iter().map(|t| t.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&EventType> {
        self.types.iter().find(|t| t.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.types.iter().position(|t| t.id == id)
    }

    /// Multiply every duration range by `scale` (desk-size runs).
    pub fn with_duration_scale(mut self, scale: f64) -> Self {
        for ty in &mut self.types {
            ty.duration_range_s = ty.duration_range_s.map(|d| d * scale);
        }
        self
    }
}
