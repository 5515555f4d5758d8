//! Log-mel spectral features (MFSC) and per-coefficient normalization.

mod io;
mod mel;
mod norm;

pub use io::{read_features, write_features, FeatureSidecar};
pub use mel::{hz_to_mel, mel_to_hz, mfsc, mfsc_with, FeatureConfig, FeatureMatrix, MelFilterbank};
pub use norm::NormStats;
