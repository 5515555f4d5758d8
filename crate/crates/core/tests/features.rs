use std::f64::consts::PI;

use audioqa_core::features::{mfsc, FeatureConfig, FeatureMatrix, MelFilterbank, NormStats};
use proptest::prelude::*;

/// Direct O(N^2) DFT reference with its own window and triangle code.
fn reference_frame(frame: &[f64], n_fft: usize, sr: f64, n_mels: usize) -> Vec<f64> {
    let n = frame.len();
    let w: Vec<f64> = (0..n)
        .map(|i| frame[i] * (0.54 - 0.46 * (2.0 * PI * i as f64 / (n as f64 - 1.0)).cos()))
        .collect();
    let power: Vec<f64> = (0..=n_fft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in w.iter().enumerate() {
                let a = -2.0 * PI * (k * i) as f64 / n_fft as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            re * re + im * im
        })
        .collect();
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(sr / 2.0);
    let pts: Vec<f64> = (0..n_mels + 2).map(|i| inv(top * i as f64 / (n_mels + 1) as f64)).collect();
    (0..n_mels)
        .map(|m| {
            let e: f64 = power
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let f = k as f64 * sr / n_fft as f64;
                    let tri = if f <= pts[m] || f >= pts[m + 2] {
                        0.0
                    } else if f <= pts[m + 1] {
                        (f - pts[m]) / (pts[m + 1] - pts[m])
                    } else {
                        (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1])
                    };
                    tri * p
                })
                .sum();
            e.max(1e-10).ln()
        })
        .collect()
}

#[test]
fn matches_direct_dft_reference() {
    let sr = 16000;
    let x: Vec<f32> = (0..2000)
        .map(|i| {
            let t = i as f64 / sr as f64;
            (0.5 * (2.0 * PI * 440.0 * t).sin() + 0.3 * (2.0 * PI * 3100.0 * t).sin() + 0.01 * ((i * 7919) % 13) as f64)
                as f32
        })
        .collect();
    let m = mfsc(&x, sr).unwrap();
    assert_eq!(m.frames, 1 + (2000 - 400) / 160);
    for t in [0, 3, m.frames - 1] {
        let frame: Vec<f64> = x[t * 160..t * 160 + 400].iter().map(|&v| v as f64).collect();
        let r = reference_frame(&frame, 512, sr as f64, 64);
        for (d, rv) in r.iter().enumerate() {
            assert!((m.get(t, d) as f64 - rv).abs() < 1e-3, "frame {t} dim {d}");
        }
    }
}

#[test]
fn sine_at_center_peaks_its_filter() {
    let sr = 16000;
    let bank = MelFilterbank::new(512, sr, 64);
    for filter in [12, 20, 33, 47, 58] {
        let f = bank.center_hz(filter);
        let x: Vec<f32> = (0..8000)
            .map(|i| (2.0 * PI * f * i as f64 / sr as f64).sin() as f32)
            .collect();
        let m = mfsc(&x, sr).unwrap();
        for t in 1..m.frames - 1 {
            let row = m.row(t);
            let argmax = (0..64).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, filter, "frame {t}, {f:.1} Hz");
        }
    }
}

#[test]
fn deterministic_bitwise() {
    let x: Vec<f32> = (0..5000).map(|i| ((i * 31 % 97) as f32 / 97.0) - 0.5).collect();
    assert_eq!(mfsc(&x, 16000).unwrap(), mfsc(&x, 16000).unwrap());
}

#[test]
fn normalizer_hits_zero_mean_unit_std() {
    let mats: Vec<FeatureMatrix> = (0..4)
        .map(|k| {
            let x: Vec<f32> = (0..6000 + 1000 * k)
                .map(|i| ((i as f64 * (0.01 + 0.003 * k as f64)).sin() * (1.0 + k as f64)) as f32)
                .collect();
            mfsc(&x, 16000).unwrap()
        })
        .collect();
    let stats = NormStats::fit(&mats).unwrap();
    let z: Vec<FeatureMatrix> = mats.iter().map(|m| stats.apply(m).unwrap()).collect();
    let n: usize = z.iter().map(|m| m.frames).sum();
    for d in 0..64 {
        let vals: Vec<f64> = z.iter().flat_map(|m| (0..m.frames).map(move |t| m.get(t, d) as f64)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() <= 1e-5, "dim {d} mean {mean}");
        if stats.std[d] > 1e-8 {
            assert!((sd - 1.0).abs() <= 1e-4, "dim {d} std {sd}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn frame_count_formula(n in 400usize..20000) {
        let m = mfsc(&vec![0.25; n], 16000).unwrap();
        prop_assert_eq!(m.frames, 1 + (n - 400) / 160);
        prop_assert_eq!(FeatureConfig::default().num_frames(n, 16000), Some(m.frames));
        prop_assert!(m.data.iter().all(|v| v.is_finite()));
    }
}
