use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One event placed in a clip. `ordinal` is the 1-based rank by start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventOccurrence {
    pub type_id: String,
    pub instance_index: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub loudness: f64,
    pub ordinal: usize,
}

impl EventOccurrence {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipAnnotation {
    pub clip_id: String,
    pub has_noise: bool,
    pub total_duration_s: f64,
    pub events: Vec<EventOccurrence>,
}

impl ClipAnnotation {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Back-to-back layout of `(type_id, duration, loudness)` triples with
    /// no overlap and no noise; instance indices are positions.
    pub fn from_events(clip_id: &str, events: &[(&str, f64, f64)]) -> Self {
        let mut t = 0.0;
        let events: Vec<EventOccurrence> = events
            .iter()
            .enumerate()
            .map(|(k, &(ty, dur, loud))| {
                let ev = EventOccurrence {
                    type_id: ty.to_string(),
                    instance_index: k as u32,
                    start_s: t,
                    end_s: t + dur,
                    loudness: loud,
                    ordinal: k + 1,
                };
                t += dur;
                ev
            })
            .collect();
        ClipAnnotation {
            clip_id: clip_id.to_string(),
            has_noise: false,
            total_duration_s: t,
            events,
        }
    }

    pub fn count_type(&self, type_id: &str) -> usize {
        self.events.iter().filter(|e| e.type_id == type_id).count()
    }
}

/// The ordered instance-id tuple used for split deduplication.
pub fn sequence_key(ann: &ClipAnnotation) -> Vec<(String, u32)> {
    ann.events
        .iter()
        .map(|e| (e.type_id.clone(), e.instance_index))
        .collect()
}

pub fn write_annotations(path: &Path, clips: &[ClipAnnotation]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for clip in clips {
        let line = serde_json::to_string(clip).map_err(|e| Error::json(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_annotations(path: &Path) -> Result<Vec<ClipAnnotation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}
