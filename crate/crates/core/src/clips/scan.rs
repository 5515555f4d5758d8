use std::collections::{HashMap, HashSet};
use std::fmt;

use super::annotation::{sequence_key, ClipAnnotation};
use super::ClipConfig;
use crate::events::EventType;

/// A broken dataset invariant found by a scanner.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub clip_id: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.clip_id, self.message)
    }
}

const TIME_EPS: f64 = 1e-9;

/// Check one clip: event count, ordering, ordinals, overlap bound,
/// continuous-type adjacency and total duration.
pub fn scan_annotation(ann: &ClipAnnotation, types: &[EventType], cfg: &ClipConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |m: String| {
        out.push(Violation {
            clip_id: ann.clip_id.clone(),
            message: m,
        })
    };
    let continuous: HashMap<&str, bool> = types.iter().map(|t| (t.id.as_str(), t.is_continuous())).collect();
    let n = ann.events.len();
    if n < cfg.min_events || n > cfg.max_events {
        bad(format!("{n} events outside [{}, {}]", cfg.min_events, cfg.max_events));
    }
    for (k, e) in ann.events.iter().enumerate() {
        if e.ordinal != k + 1 {
            bad(format!("event {k} has ordinal {}", e.ordinal));
        }
        if !(e.end_s > e.start_s && e.start_s >= 0.0) {
            bad(format!("event {} has bad span [{}, {}]", e.ordinal, e.start_s, e.end_s));
        }
        if !(e.loudness > 0.0 && e.loudness.is_finite()) {
            bad(format!("event {} has loudness {}", e.ordinal, e.loudness));
        }
        if !continuous.contains_key(e.type_id.as_str()) {
            bad(format!("event {} has unknown type {}", e.ordinal, e.type_id));
        }
    }
    for w in ann.events.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.start_s < a.start_s {
            bad(format!("event {} starts before event {}", b.ordinal, a.ordinal));
        }
        if b.start_s < a.end_s - cfg.max_overlap_s - TIME_EPS {
            bad(format!(
                "events {} and {} overlap by {:.4} s",
                a.ordinal,
                b.ordinal,
                a.end_s - b.start_s
            ));
        }
        if a.type_id == b.type_id && continuous.get(a.type_id.as_str()) == Some(&true) {
            bad(format!(
                "adjacent continuous events {} and {} share type {}",
                a.ordinal, b.ordinal, a.type_id
            ));
        }
    }
    let max_end = ann.events.iter().map(|e| e.end_s).fold(0.0, f64::max);
    if (ann.total_duration_s - max_end).abs() > TIME_EPS {
        bad(format!("total duration {} != last end {max_end}", ann.total_duration_s));
    }
    out
}

/// Split-level checks: exactly half noisy (rounded down) and no
/// validation/test sequence equal to a training sequence.
pub fn scan_splits(train: &[ClipAnnotation], others: &[(&str, &[ClipAnnotation])]) -> Vec<Violation> {
    let mut out = Vec::new();
    let noisy_check = |name: &str, clips: &[ClipAnnotation], out: &mut Vec<Violation>| {
        let noisy = clips.iter().filter(|c| c.has_noise).count();
        if noisy != clips.len() / 2 {
            out.push(Violation {
                clip_id: format!("<{name}>"),
                message: format!("{noisy} of {} clips noisy, expected {}", clips.len(), clips.len() / 2),
            });
        }
    };
    noisy_check("train", train, &mut out);
    let keys: HashSet<Vec<(String, u32)>> = train.iter().map(sequence_key).collect();
    for (name, clips) in others {
        noisy_check(name, clips, &mut out);
        for c in clips.iter() {
            if keys.contains(&sequence_key(c)) {
                out.push(Violation {
                    clip_id: c.clip_id.clone(),
                    message: format!("{name} clip repeats a training sequence"),
                });
            }
        }
    }
    out
}
