//! Mono 16-bit PCM WAV input/output.

use std::path::Path;

use crate::error::{Error, Result};

pub fn write_wav_mono16(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let audio_err = |e: hound::Error| Error::Audio {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(audio_err)?;
    for &s in samples {
        writer.write_sample(to_pcm16(s)).map_err(audio_err)?;
    }
    writer.finalize().map_err(audio_err)
}

pub fn to_pcm16(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16
}

/// Read a mono 16-bit WAV file, returning samples scaled to [-1, 1] and the rate.
pub fn read_wav_mono16(path: &Path) -> Result<(Vec<f32>, u32)> {
    let audio_err = |message: String| Error::Audio {
        path: path.to_path_buf(),
        message,
    };
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    let reader = hound::WavReader::open(path).map_err(|e| audio_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(audio_err(format!(
            "expected mono 16-bit PCM, found {} channel(s), {} bits",
            spec.channels, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / i16::MAX as f32))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| audio_err(e.to_string()))?;
    Ok((samples, spec.sample_rate))
}

/// Duration in seconds from the WAV header alone.
pub fn wav_duration(path: &Path) -> Result<(f64, u32)> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::Audio {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let spec = reader.spec();
    Ok((reader.duration() as f64 / spec.sample_rate as f64, spec.sample_rate))
}
