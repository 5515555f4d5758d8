//! Event taxonomy, synthetic event instances and the event library.

mod library;
mod loudness;
mod synth;
mod taxonomy;

pub use library::{EventInstance, EventLibrary, InstanceSource, LibraryMode, Manifest, ManifestEntry};
pub use loudness::{compute_loudness_proxy, LOUDNESS_EXPONENT, LOUDNESS_REFERENCE};
pub use synth::{synthesize_event, MIN_SAMPLE_RATE};
pub use taxonomy::{Component, ComponentKind, Continuity, Envelope, EventType, Signature, Taxonomy};

/// Default sample rate for synthesized audio.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Default number of instances per event type.
pub const DEFAULT_INSTANCES_PER_TYPE: usize = 20;
