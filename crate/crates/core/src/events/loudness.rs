/// Reference RMS, in full-scale units.
pub const LOUDNESS_REFERENCE: f64 = 2e-5;

/// Power-law exponent applied to the RMS ratio.
pub const LOUDNESS_EXPONENT: f64 = 0.6;

/// Loudness proxy `(rms / 2e-5)^0.6`.
///
/// Stands in for a psychoacoustic loudness model. Answers only ever compare
/// loudness values ordinally, and this is strictly increasing in RMS.
pub fn compute_loudness_proxy(waveform: &[f32], _sample_rate: u32) -> f64 {
    if waveform.is_empty() {
        return 0.0;
    }
    let energy: f64 = waveform.iter().map(|&s| (s as f64) * (s as f64)).sum();
    let rms = (energy / waveform.len() as f64).sqrt();
    if rms == 0.0 {
        return 0.0;
    }
    (rms / LOUDNESS_REFERENCE).powf(LOUDNESS_EXPONENT)
}
