use rand::Rng as _;
use rand_distr::StandardNormal;

use super::annotation::{ClipAnnotation, EventOccurrence};
use super::ClipConfig;
use crate::error::{Error, Result};
use crate::events::EventLibrary;
use crate::rng::{rng_from, Rng};

/// Draw an ordered list of instance indices (into `library.instances`).
///
/// Length is uniform on `min_events..=max_events`. Each position picks a
/// type uniformly, then an instance of that type uniformly; a draw that
/// repeats the previous type is rejected when that type is continuous.
pub fn sample_event_sequence(library: &EventLibrary, rng: &mut Rng, cfg: &ClipConfig) -> Result<Vec<usize>> {
    let by_type: Vec<(bool, Vec<usize>)> = library
        .types
        .iter()
        .map(|ty| {
            let idx = library
                .instances
                .iter()
                .enumerate()
                .filter(|(_, inst)| inst.type_id == ty.id)
                .map(|(i, _)| i)
                .collect();
            (ty.is_continuous(), idx)
        })
        .collect();
    if by_type.is_empty() {
        return Err(Error::Schema("no event types".into()));
    }
    if by_type.len() == 1 && by_type[0].0 && cfg.max_events > 1 {
        return Err(Error::Generation(
            "a single continuous event type cannot form a valid sequence".into(),
        ));
    }
    if cfg.min_events == 0 || cfg.min_events > cfg.max_events {
        return Err(Error::InvalidArgument(format!(
            "bad event count range {}..={}",
            cfg.min_events, cfg.max_events
        )));
    }
    let n = rng.random_range(cfg.min_events..=cfg.max_events);
    let mut seq: Vec<usize> = Vec::with_capacity(n);
    let mut prev: Option<usize> = None;
    while seq.len() < n {
        let t = rng.random_range(0..by_type.len());
        let (continuous, ref insts) = by_type[t];
        if continuous && prev == Some(t) {
            continue;
        }
        seq.push(insts[rng.random_range(0..insts.len())]);
        prev = Some(t);
    }
    Ok(seq)
}

/// Splice positions for events of the given durations where event `i + 1`
/// starts `overlaps[i]` seconds before event `i` ends. Times are quantized
/// to whole samples. Returns `(start, end)` pairs in seconds.
pub fn layout(durations: &[f64], overlaps: &[f64], sample_rate: u32) -> Vec<(f64, f64)> {
    let sr = sample_rate as f64;
    let mut out = Vec::with_capacity(durations.len());
    let mut start = 0i64;
    for (i, &d) in durations.iter().enumerate() {
        if i > 0 {
            let prev_end = out_end(&out, sr);
            let ov = (overlaps[i - 1] * sr).round() as i64;
            start = prev_end - ov;
        }
        let n = (d * sr).round() as i64;
        out.push((start as f64 / sr, (start + n) as f64 / sr));
    }
    out
}

fn out_end(spans: &[(f64, f64)], sr: f64) -> i64 {
    (spans.last().map_or(0.0, |s| s.1) * sr).round() as i64
}

/// Draw overlaps for `sequence` and produce its annotation.
///
/// Each overlap is uniform on `[0, min(max_overlap, half the previous
/// event)]`; the second bound keeps start order intact for very short events.
pub fn plan_clip(
    sequence: &[usize],
    library: &EventLibrary,
    rng: &mut Rng,
    has_noise: bool,
    clip_id: &str,
    cfg: &ClipConfig,
) -> Result<ClipAnnotation> {
    if sequence.is_empty() {
        return Err(Error::Generation(format!("{clip_id}: empty event sequence")));
    }
    let insts: Vec<_> = sequence.iter().map(|&i| &library.instances[i]).collect();
    let durations: Vec<f64> = insts.iter().map(|i| i.duration).collect();
    let overlaps: Vec<f64> = durations[..durations.len() - 1]
        .iter()
        .map(|&d| rng.random::<f64>() * cfg.max_overlap_s.min(0.5 * d))
        .collect();
    let spans = layout(&durations, &overlaps, library.sample_rate);
    let events: Vec<EventOccurrence> = insts
        .iter()
        .zip(&spans)
        .enumerate()
        .map(|(k, (inst, &(start_s, end_s)))| EventOccurrence {
            type_id: inst.type_id.clone(),
            instance_index: inst.instance_index,
            start_s,
            end_s,
            loudness: inst.loudness,
            ordinal: k + 1,
        })
        .collect();
    let total_duration_s = events.iter().map(|e| e.end_s).fold(0.0, f64::max);
    Ok(ClipAnnotation {
        clip_id: clip_id.to_string(),
        has_noise,
        total_duration_s,
        events,
    })
}

/// Mix the events of an annotation by plain addition, optionally add
/// Gaussian noise at `snr_db` relative to the clean mix RMS, then scale the
/// clip to unit peak.
pub fn render_annotation(ann: &ClipAnnotation, library: &EventLibrary, snr_db: f64, noise_seed: u64) -> Result<Vec<f32>> {
    let sr = library.sample_rate as f64;
    let total = (ann.total_duration_s * sr).round() as usize;
    let mut mix = vec![0.0f64; total];
    for ev in &ann.events {
        let inst = library.instance(&ev.type_id, ev.instance_index).ok_or_else(|| {
            Error::Schema(format!(
                "{}: unknown instance {}#{}",
                ann.clip_id, ev.type_id, ev.instance_index
            ))
        })?;
        let wave = library.waveform(inst)?;
        let start = (ev.start_s * sr).round() as usize;
        for (m, &s) in mix[start.min(total)..].iter_mut().zip(&wave) {
            *m += s as f64;
        }
    }
    if ann.has_noise && total > 0 {
        let rms = (mix.iter().map(|x| x * x).sum::<f64>() / total as f64).sqrt();
        let sigma = rms / 10f64.powf(snr_db / 20.0);
        let mut rng = rng_from(noise_seed, &[]);
        for m in &mut mix {
            let z: f64 = rng.sample(StandardNormal);
            *m += sigma * z;
        }
    }
    let peak = mix.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    Ok(mix.iter().map(|&m| ((m * scale) as f32).clamp(-1.0, 1.0)).collect())
}

/// Plan and render in one go; the noise stream seed is drawn from `rng`
/// after the overlaps.
pub fn render_clip(
    sequence: &[usize],
    library: &EventLibrary,
    rng: &mut Rng,
    has_noise: bool,
    clip_id: &str,
    cfg: &ClipConfig,
) -> Result<(Vec<f32>, ClipAnnotation)> {
    let ann = plan_clip(sequence, library, rng, has_noise, clip_id, cfg)?;
    let noise_seed = rng.random::<u64>();
    let wave = render_annotation(&ann, library, cfg.snr_db, noise_seed)?;
    Ok((wave, ann))
}
