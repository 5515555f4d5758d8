use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::net::{Modulation, Model};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Hyperparams, ParamStore, Tape};
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hyper: Hyperparams,
    pub seed: u64,
    /// Width of the clip-length bins used to form batches, in frames.
    pub bin_frames: usize,
    /// Stop as soon as an epoch's training accuracy reaches this value.
    pub stop_at_train_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hyper: Hyperparams::default(),
            seed: 0,
            bin_frames: 100,
            stop_at_train_acc: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the train-mode forward passes made during the epoch.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_acc: Option<f64>,
}

pub fn argmax(row: &[f32]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Trains with Adam on length-bucketed minibatches. With a validation set
/// the parameters of the best validation epoch are restored at the end.
pub fn train(
    model: &mut Model<f32>,
    train_set: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut adam = AdamState::default();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_acc: None,
    };
    let mut best: Option<ParamStore<f32>> = None;
    for epoch in 0..cfg.hyper.epochs {
        let start = Instant::now();
        let mut rng = rng_from(cfg.seed, &[epoch as u64]);
        let batches = train_set.batches(cfg.hyper.batch_size, cfg.bin_frames, Some(&mut rng));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (bi, idx) in batches.iter().enumerate() {
            let batch = train_set.batch::<f32>(idx);
            let mut tape = Tape::new(true);
            let fwd = model.forward(&mut tape, &batch, Modulation::Predicted)?;
            let loss = tape.cross_entropy(fwd.logits, &batch.labels)?;
            let lv = tape.value(loss).data[0] as f64;
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {bi}")));
            }
            loss_sum += lv * idx.len() as f64;
            let k = tape.value(fwd.logits).shape[1];
            correct += tape
                .value(fwd.logits)
                .data
                .chunks(k)
                .zip(&batch.labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            let mut grads = tape.backward(loss);
            let pg = fwd.bound.grads(&mut grads, &model.store);
            adam_step(&mut model.store, &pg, &mut adam, &cfg.hyper);
        }
        let n = train_set.len() as f64;
        let val_acc = match val {
            Some(v) if !v.is_empty() => Some(accuracy(model, v, cfg.hyper.batch_size)?),
            _ => None,
        };
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_acc,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        if let Some(acc) = val_acc {
            if report.best_val_acc.is_none_or(|b| acc > b) {
                report.best_val_acc = Some(acc);
                report.best_epoch = epoch;
                best = Some(model.store.clone());
            }
        } else {
            report.best_epoch = epoch;
        }
        let stop = cfg.stop_at_train_acc.is_some_and(|t| log.train_acc >= t);
        report.epochs.push(log);
        if stop {
            break;
        }
    }
    if let Some(b) = best {
        model.store = b;
    }
    Ok(report)
}

/// Eval-mode predictions (answer indices) in example order.
pub fn predict(model: &mut Model<f32>, data: &Dataset, batch_size: usize) -> Result<Vec<usize>> {
    let mut out = vec![0; data.len()];
    for idx in data.batches(batch_size, usize::MAX, None) {
        let batch = data.batch::<f32>(&idx);
        let mut tape = Tape::new(false);
        let fwd = model.forward(&mut tape, &batch, Modulation::Predicted)?;
        let logits = tape.value(fwd.logits);
        let k = logits.shape[1];
        for (row, &i) in logits.data.chunks(k).zip(&idx) {
            out[i] = argmax(row);
        }
    }
    Ok(out)
}

pub fn accuracy(model: &mut Model<f32>, data: &Dataset, batch_size: usize) -> Result<f64> {
    let pred = predict(model, data, batch_size)?;
    let hits = pred.iter().zip(&data.examples).filter(|(p, e)| **p == e.label).count();
    Ok(hits as f64 / data.len().max(1) as f64)
}
