//! Synthetic event waveforms.
//!
//! Each event type has a fixed spectral signature (see [`Signature`]); an
//! instance draws its duration, gain and small frequency jitter from a
//! seeded stream, so a waveform is a pure function of
//! `(type id, instance index, sample rate, seed)`.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::taxonomy::{Component, ComponentKind, Envelope, EventType, Signature};
use crate::rng::{label_seed, rng_from, Rng};

pub const MIN_SAMPLE_RATE: u32 = 8000;

/// Signature frequencies are specified for 16 kHz audio.
const REFERENCE_RATE: f64 = 16_000.0;

const BAND_Q: f64 = 4.0;

pub fn synthesize_event(ty: &EventType, instance_index: u32, sample_rate: u32, seed: u64) -> Vec<f32> {
    assert!(
        sample_rate >= MIN_SAMPLE_RATE,
        "sample rate {sample_rate} below {MIN_SAMPLE_RATE}"
    );
    let mut rng = rng_from(seed, &[label_seed(&ty.id), instance_index as u64]);
    let sr = sample_rate as f64;
    let [lo, hi] = ty.duration_range_s;
    let duration = lo + (hi - lo) * rng.random::<f64>();
    let n = ((duration * sr).round() as usize).max(1);
    let gain = 0.5 + 0.5 * rng.random::<f64>();

    let sig = ty.signature.clone().unwrap_or_else(|| Signature {
        primary_hz: 1000.0,
        primary: ComponentKind::Noise,
        envelope: Envelope::Sustained,
        pulse_hz: None,
        extras: vec![],
    });
    let freq_scale = (sr / REFERENCE_RATE).min(1.0);
    let jitter = 1.0 + 0.03 * (2.0 * rng.random::<f64>() - 1.0);

    let mut mix = vec![0.0f64; n];
    let primary = Component {
        kind: sig.primary,
        hz: sig.primary_hz * jitter,
        gain: 1.0,
    };
    for comp in std::iter::once(&primary).chain(sig.extras.iter()) {
        let hz = comp.hz * freq_scale;
        if hz >= 0.45 * sr {
            continue;
        }
        let wave = match comp.kind {
            ComponentKind::Noise => band_noise(&mut rng, n, hz, sr),
            ComponentKind::Tone => tone(&mut rng, n, hz, sr),
        };
        for (m, w) in mix.iter_mut().zip(wave) {
            *m += comp.gain * w;
        }
    }

    let pulse_phase = 2.0 * PI * rng.random::<f64>();
    for (i, m) in mix.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let mut env = envelope(sig.envelope, t, duration);
        if let Some(rate) = sig.pulse_hz {
            let p = 0.5 + 0.5 * (2.0 * PI * rate * t + pulse_phase).sin();
            env *= 0.1 + 0.9 * p * p;
        }
        *m *= env;
    }

    let peak = mix.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let norm = if peak > 0.0 { gain / peak } else { 0.0 };
    mix.iter().map(|&m| ((m * norm) as f32).clamp(-1.0, 1.0)).collect()
}

fn envelope(kind: Envelope, t: f64, duration: f64) -> f64 {
    match kind {
        Envelope::Impulsive => {
            let attack = 0.005f64.min(duration * 0.1);
            if t < attack {
                t / attack
            } else {
                (-(t - attack) / (0.25 * duration)).exp()
            }
        }
        Envelope::Sustained => {
            let fade = (0.1 * duration).min(0.2);
            let edge = t.min(duration - t).max(0.0);
            if edge >= fade {
                1.0
            } else {
                0.5 - 0.5 * (PI * edge / fade).cos()
            }
        }
        Envelope::Swell => {
            let s = (PI * t / duration).sin();
            0.15 + 0.85 * s * s
        }
    }
}

/// White Gaussian noise through a constant-peak-gain resonant band-pass,
/// rescaled to unit RMS.
fn band_noise(rng: &mut Rng, n: usize, hz: f64, sr: f64) -> Vec<f64> {
    let w0 = 2.0 * PI * hz / sr;
    let alpha = w0.sin() / (2.0 * BAND_Q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        let y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        out.push(y);
    }
    unit_rms(out)
}

/// Fundamental plus a weak second harmonic, rescaled to unit RMS.
fn tone(rng: &mut Rng, n: usize, hz: f64, sr: f64) -> Vec<f64> {
    let phase = 2.0 * PI * rng.random::<f64>();
    let w = 2.0 * PI * hz / sr;
    let second = 2.0 * hz < 0.45 * sr;
    let out = (0..n)
        .map(|i| {
            let p = w * i as f64 + phase;
            let mut v = p.sin();
            if second {
                v += 0.2 * (2.0 * p).sin();
            }
            v
        })
        .collect();
    unit_rms(out)
}

fn unit_rms(mut v: Vec<f64>) -> Vec<f64> {
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        v.iter_mut().for_each(|x| *x /= rms);
    }
    v
}
