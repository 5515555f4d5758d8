use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalItem;
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Hyperparams, ParamStore, Tensor};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    TemplateOneHot,
    BagOfWords,
}

/// Maps a question to a sparse binary feature vector. Templates or words
/// unseen in training map to nothing, leaving only the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub kind: FeatureKind,
    pub index: BTreeMap<String, usize>,
}

impl Encoder {
    pub fn build(kind: FeatureKind, train: &[EvalItem]) -> Self {
        let mut keys: Vec<String> = match kind {
            FeatureKind::TemplateOneHot => train.iter().map(|it| it.template_id.clone()).collect(),
            FeatureKind::BagOfWords => train.iter().flat_map(|it| it.tokens.iter().map(|w| w.to_lowercase())).collect(),
        };
        keys.sort();
        keys.dedup();
        Encoder {
            kind,
            index: keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect(),
        }
    }

    pub fn dims(&self) -> usize {
        self.index.len()
    }

    /// Active feature indices, sorted and unique.
    pub fn encode(&self, it: &EvalItem) -> Vec<usize> {
        let mut f: Vec<usize> = match self.kind {
            FeatureKind::TemplateOneHot => self.index.get(&it.template_id).copied().into_iter().collect(),
            FeatureKind::BagOfWords => it.tokens.iter().filter_map(|w| self.index.get(&w.to_lowercase()).copied()).collect(),
        };
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub encoder: Encoder,
    pub classes: usize,
    /// Row-major `classes x dims`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub epochs: usize,
    pub epoch_losses: Vec<f64>,
    pub converged: bool,
}

/// Loss change over this many epochs decides convergence.
const PATIENCE: usize = 5;

impl LogisticModel {
    fn scores(&self, feats: &[usize], out: &mut [f64]) {
        let d = self.encoder.dims();
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.bias[c] + feats.iter().map(|&f| self.weights[c * d + f]).sum::<f64>();
        }
    }

    /// Softmax regression trained with Adam on minibatches of
    /// `hp.batch_size`, until the epoch loss moves less than `tol` over five
    /// epochs or `hp.epochs` is reached.
    pub fn train(
        kind: FeatureKind,
        train: &[EvalItem],
        classes: usize,
        hp: &Hyperparams,
        tol: f64,
        seed: u64,
    ) -> Result<(Self, LogisticFit)> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("logistic model needs training questions".into()));
        }
        let encoder = Encoder::build(kind, train);
        let d = encoder.dims();
        let feats: Vec<Vec<usize>> = train.iter().map(|it| encoder.encode(it)).collect();
        let mut store = ParamStore::<f64>::default();
        let w_id = store.add("w", Tensor::zeros(&[classes, d]));
        let b_id = store.add("b", Tensor::zeros(&[classes]));
        let mut model = LogisticModel {
            encoder,
            classes,
            weights: vec![0.0; classes * d],
            bias: vec![0.0; classes],
        };
        let mut state = AdamState::default();
        let mut rng = rng_from(seed, &[]);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut losses = Vec::new();
        let mut converged = false;
        let mut p = vec![0.0; classes];
        for _ in 0..hp.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(hp.batch_size.max(1)) {
                let mut gw = vec![0.0; classes * d];
                let mut gb = vec![0.0; classes];
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    model.scores(&feats[i], &mut p);
                    let mx = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = p.iter().map(|s| (s - mx).exp()).sum();
                    total += z.ln() + mx - p[train[i].label];
                    for c in 0..classes {
                        let mut g = (p[c] - mx).exp() / z;
                        if c == train[i].label {
                            g -= 1.0;
                        }
                        g *= scale;
                        gb[c] += g;
                        for &f in &feats[i] {
                            gw[c * d + f] += g;
                        }
                    }
                }
                let grads = [Some(Tensor::new(&[classes, d], gw)?), Some(Tensor::new(&[classes], gb)?)];
                adam_step(&mut store, &grads, &mut state, hp);
                model.weights.copy_from_slice(&store.get(w_id).data);
                model.bias.copy_from_slice(&store.get(b_id).data);
            }
            losses.push(total / train.len() as f64);
            let e = losses.len();
            if e > PATIENCE && (losses[e - 1] - losses[e - 1 - PATIENCE]).abs() < tol {
                converged = true;
                break;
            }
        }
        let fit = LogisticFit {
            epochs: losses.len(),
            epoch_losses: losses,
            converged,
        };
        Ok((model, fit))
    }

    pub fn predict(&self, items: &[EvalItem]) -> Vec<usize> {
        let mut s = vec![0.0; self.classes];
        items
            .iter()
            .map(|it| {
                self.scores(&self.encoder.encode(it), &mut s);
                let mut best = 0;
                for c in 1..self.classes {
                    if s[c] > s[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}
