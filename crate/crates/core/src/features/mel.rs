use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conventions the feature extractor depends on. Everything not fixed by the
/// experimental setup (FFT size rule, mel variant, floor, filter scaling) is
/// a named constant here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub frame_len_s: f64,
    pub frame_stride_s: f64,
    pub n_mels: usize,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            frame_len_s: 0.025,
            frame_stride_s: 0.010,
            n_mels: 64,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_len_s * sample_rate as f64).round() as usize
    }

    pub fn stride(&self, sample_rate: u32) -> usize {
        (self.frame_stride_s * sample_rate as f64).round() as usize
    }

    pub fn n_fft(&self, sample_rate: u32) -> usize {
        self.frame_len(sample_rate).next_power_of_two()
    }

    /// Number of frames for an `n`-sample waveform, or `None` if it is too short.
    pub fn num_frames(&self, n: usize, sample_rate: u32) -> Option<usize> {
        let len = self.frame_len(sample_rate);
        (n >= len).then(|| 1 + (n - len) / self.stride(sample_rate))
    }
}

/// `frames x dims` matrix, row-major (one row per frame).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: usize,
    pub dims: usize,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(frames: usize, dims: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != frames * dims {
            return Err(Error::Shape {
                op: "feature_matrix",
                lhs: vec![frames, dims],
                rhs: vec![data.len()],
            });
        }
        Ok(FeatureMatrix { frames, dims, data })
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dims..(t + 1) * self.dims]
    }

    pub fn get(&self, t: usize, d: usize) -> f32 {
        self.data[t * self.dims + d]
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, edges equally spaced on the mel scale
/// between 0 Hz and Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_fft: usize,
    pub sample_rate: u32,
    /// `n_mels + 2` edge frequencies in Hz; filter `m` peaks at `edges[m + 1]`.
    pub edges_hz: Vec<f64>,
    /// `n_mels x (n_fft/2 + 1)` weights.
    pub weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(n_fft: usize, sample_rate: u32, n_mels: usize) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let weights = (0..n_mels)
            .map(|m| {
                let (lo, c, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * sample_rate as f64 / n_fft as f64;
                        let up = (f - lo) / (c - lo);
                        let down = (hi - f) / (hi - c);
                        up.min(down).max(0.0)
                    })
                    .collect()
            })
            .collect();
        MelFilterbank {
            n_fft,
            sample_rate,
            edges_hz,
            weights,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges_hz[m + 1]
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o = w.iter().zip(power).map(|(a, b)| a * b).sum();
        }
    }
}

pub fn mfsc(waveform: &[f32], sample_rate: u32) -> Result<FeatureMatrix> {
    mfsc_with(waveform, sample_rate, &FeatureConfig::default())
}

pub fn mfsc_with(waveform: &[f32], sample_rate: u32, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let len = cfg.frame_len(sample_rate);
    let stride = cfg.stride(sample_rate);
    let frames = cfg.num_frames(waveform.len(), sample_rate).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "waveform has {} samples; at least {len} ({} s at {sample_rate} Hz) are required",
            waveform.len(),
            cfg.frame_len_s
        ))
    })?;
    let n_fft = cfg.n_fft(sample_rate);
    let bank = MelFilterbank::new(n_fft, sample_rate, cfg.n_mels);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n_fft);
    // symmetric Hamming
    let window: Vec<f64> = (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos())
        .collect();
    let floor = cfg.log_floor.ln();

    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0; n_fft / 2 + 1];
    let mut energies = vec![0.0; cfg.n_mels];
    let mut data = Vec::with_capacity(frames * cfg.n_mels);
    for t in 0..frames {
        let frame = &waveform[t * stride..t * stride + len];
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < len {
                Complex::new(frame[i] as f64 * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p = b.norm_sqr();
        }
        bank.apply(&power, &mut energies);
        data.extend(energies.iter().map(|&e| {
            if e > cfg.log_floor {
                e.ln() as f32
            } else {
                floor as f32
            }
        }));
    }
    FeatureMatrix::new(frames, cfg.n_mels, data)
}
