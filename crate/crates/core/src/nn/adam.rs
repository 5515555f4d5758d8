use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay (`p *= 1 - lr * wd` before the Adam step); otherwise
    /// `wd * p` is added to the gradient.
    pub decoupled_decay: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            batch_size: 40,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decoupled_decay: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

/// One Adam update. `grads[i]` belongs to `store.params[i]`; `None` means no
/// gradient flowed (treated as zero).
pub fn adam_step<T: Real>(store: &mut ParamStore<T>, grads: &[Option<Tensor<T>>], state: &mut AdamState<T>, hp: &Hyperparams) {
    if state.m.len() != store.len() {
        state.m = store.params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        state.v = state.m.clone();
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (hp.beta1, hp.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let lr = hp.learning_rate;
    let decay = T::of(1.0 - lr * hp.weight_decay);
    let (b1t, b2t, eps) = (T::of(b1), T::of(b2), T::of(hp.eps));
    let (bc1t, bc2t, lrt, wd) = (T::of(bc1), T::of(bc2), T::of(lr), T::of(hp.weight_decay));
    for (i, p) in store.params.iter_mut().enumerate() {
        let g = grads.get(i).and_then(|g| g.as_ref());
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.value.data.iter_mut().enumerate() {
            let mut gj = g.map_or(T::zero(), |g| g.data[j]);
            if hp.decoupled_decay {
                *w *= decay;
            } else {
                gj += wd * *w;
            }
            m[j] = b1t * m[j] + (T::one() - b1t) * gj;
            v[j] = b2t * v[j] + (T::one() - b2t) * gj * gj;
            let mhat = m[j] / bc1t;
            let vhat = v[j] / bc2t;
            *w -= lrt * mhat / (vhat.sqrt() + eps);
        }
    }
}
