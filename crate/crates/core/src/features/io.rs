use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub clip_id: String,
    #[serde(rename = "T")]
    pub frames: usize,
    pub dims: usize,
    pub normalized: bool,
}

fn paths(dir: &Path, clip_id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{clip_id}.f32")), dir.join(format!("{clip_id}.json")))
}

/// Writes `<clip_id>.f32` (little-endian T x dims) and a `<clip_id>.json` sidecar.
pub fn write_features(dir: &Path, clip_id: &str, m: &FeatureMatrix, normalized: bool) -> Result<()> {
    let (raw, side) = paths(dir, clip_id);
    let bytes: Vec<u8> = m.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))?;
    let meta = FeatureSidecar {
        clip_id: clip_id.to_string(),
        frames: m.frames,
        dims: m.dims,
        normalized,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&side, e))?;
    fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn read_features(dir: &Path, clip_id: &str) -> Result<(FeatureMatrix, FeatureSidecar)> {
    let (raw, side) = paths(dir, clip_id);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: FeatureSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    if bytes.len() != meta.frames * meta.dims * 4 {
        return Err(Error::Schema(format!(
            "{}: expected {} floats, found {} bytes",
            raw.display(),
            meta.frames * meta.dims,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((FeatureMatrix::new(meta.frames, meta.dims, data)?, meta))
}
