//! Clip composition: event sequence sampling, splice layout, mixing and the
//! train / validation / test split builder.

mod annotation;
mod render;
mod scan;
mod split;

pub use annotation::{read_annotations, sequence_key, write_annotations, ClipAnnotation, EventOccurrence};
pub use render::{layout, plan_clip, render_annotation, render_clip, sample_event_sequence};
pub use scan::{scan_annotation, scan_splits, Violation};
pub use split::{clip_id, generate_split, ClipPlan, DatasetSplit, SplitConfig, SplitName, Splits};

use serde::{Deserialize, Serialize};

/// Knobs for clip composition. Defaults follow the dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClipConfig {
    pub min_events: usize,
    pub max_events: usize,
    /// Upper bound on the overlap between successive events, seconds.
    pub max_overlap_s: f64,
    pub snr_db: f64,
    /// Resampling attempts per validation/test clip when its sequence
    /// duplicates a training clip.
    pub dedup_retries: usize,
}

impl Default for ClipConfig {
    fn default() -> Self {
        ClipConfig {
            min_events: 5,
            max_events: 12,
            max_overlap_s: 0.5,
            snr_db: 30.0,
            dedup_retries: 100,
        }
    }
}
