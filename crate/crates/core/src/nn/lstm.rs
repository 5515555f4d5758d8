//! Fused stacked LSTM with per-item sequence lengths.
//!
//! Gate order is (input, forget, cell, output) and each layer has a single
//! bias vector. Steps past an item's length carry its state unchanged, so the
//! returned top-layer hidden state is the one after its last real step.

use super::tape::{Tape, Var};
use super::tensor::{gemm, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmLayer {
    /// `4H x d`
    pub w_ih: Var,
    /// `4H x H`
    pub w_hh: Var,
    /// `4H`
    pub b: Var,
}

pub(crate) struct LstmCache<T> {
    x: Var,
    layers: Vec<LstmLayer>,
    lengths: Vec<usize>,
    n: usize,
    steps: usize,
    hidden: usize,
    /// Per layer: time-major input `steps x n x d`.
    inputs: Vec<Vec<T>>,
    /// Per layer: activated gates `steps x n x 4H`.
    gates: Vec<Vec<T>>,
    /// Per layer: cell and hidden states `(steps + 1) x n x H`, index 0 is the zero state.
    cells: Vec<Vec<T>>,
    hiddens: Vec<Vec<T>>,
    /// Per layer: copies of `(w_ih, w_hh)`.
    weights: Vec<(Vec<T>, Vec<T>)>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn forward<T: Real>(tape: &Tape<T>, x: Var, layers: &[LstmLayer], lengths: &[usize]) -> Result<(Tensor<T>, LstmCache<T>)> {
    let tx = tape.value(x);
    if tx.shape.len() != 3 || layers.is_empty() {
        return Err(Error::Shape {
            op: "lstm",
            lhs: tx.shape.clone(),
            rhs: vec![3],
        });
    }
    let (n, steps, d0) = (tx.shape[0], tx.shape[1], tx.shape[2]);
    if lengths.len() != n {
        return Err(Error::Shape {
            op: "lstm",
            lhs: tx.shape.clone(),
            rhs: vec![lengths.len()],
        });
    }
    let hidden = tape.value(layers[0].w_hh).shape[1];
    let g4 = 4 * hidden;

    let mut input = vec![T::zero(); steps * n * d0];
    for b in 0..n {
        for t in 0..steps {
            input[(t * n + b) * d0..][..d0].copy_from_slice(&tx.data[(b * steps + t) * d0..][..d0]);
        }
    }
    let mut d = d0;
    let mut cache = LstmCache {
        x,
        layers: layers.to_vec(),
        lengths: lengths.to_vec(),
        n,
        steps,
        hidden,
        inputs: Vec::new(),
        gates: Vec::new(),
        cells: Vec::new(),
        hiddens: Vec::new(),
        weights: Vec::new(),
    };
    for layer in layers {
        let (wih, whh, bias) = (tape.value(layer.w_ih), tape.value(layer.w_hh), tape.value(layer.b));
        if wih.shape != [g4, d] || whh.shape != [g4, hidden] || bias.shape != [g4] {
            return Err(Error::Shape {
                op: "lstm",
                lhs: vec![g4, d, hidden],
                rhs: [wih.shape.clone(), whh.shape.clone(), bias.shape.clone()].concat(),
            });
        }
        let mut gates = vec![T::zero(); steps * n * g4];
        let mut cells = vec![T::zero(); (steps + 1) * n * hidden];
        let mut hiddens = vec![T::zero(); (steps + 1) * n * hidden];
        let mut z = vec![T::zero(); n * g4];
        for t in 0..steps {
            gemm(n, d, g4, &input[t * n * d..][..n * d], false, &wih.data, true, &mut z, false);
            gemm(n, hidden, g4, &hiddens[t * n * hidden..][..n * hidden], false, &whh.data, true, &mut z, true);
            for b in 0..n {
                let zr = &mut z[b * g4..(b + 1) * g4];
                for (j, v) in zr.iter_mut().enumerate() {
                    *v += bias.data[j];
                    *v = if (2 * hidden..3 * hidden).contains(&j) { v.tanh() } else { sigmoid(*v) };
                }
                let prev = t * n * hidden + b * hidden;
                let cur = (t + 1) * n * hidden + b * hidden;
                if t < lengths[b] {
                    for k in 0..hidden {
                        let (i, f, g, o) = (zr[k], zr[hidden + k], zr[2 * hidden + k], zr[3 * hidden + k]);
                        let c = f * cells[prev + k] + i * g;
                        cells[cur + k] = c;
                        hiddens[cur + k] = o * c.tanh();
                    }
                } else {
                    for k in 0..hidden {
                        cells[cur + k] = cells[prev + k];
                        hiddens[cur + k] = hiddens[prev + k];
                    }
                }
            }
            gates[t * n * g4..][..n * g4].copy_from_slice(&z);
        }
        let next: Vec<T> = hiddens[n * hidden..].to_vec();
        cache.inputs.push(std::mem::replace(&mut input, next));
        cache.gates.push(gates);
        cache.cells.push(cells);
        cache.hiddens.push(hiddens);
        cache.weights.push((wih.data.clone(), whh.data.clone()));
        d = hidden;
    }
    let top = cache.hiddens.last().expect("at least one layer");
    let out = Tensor {
        shape: vec![n, hidden],
        data: top[steps * n * hidden..].to_vec(),
    };
    Ok((out, cache))
}

pub(crate) fn backward<T: Real>(cache: &LstmCache<T>, dy: &Tensor<T>, acc: &mut dyn FnMut(Var, &mut dyn FnMut(&mut [T]))) {
    let (n, steps, hd) = (cache.n, cache.steps, cache.hidden);
    let g4 = 4 * hd;
    // gradient reaching each step's hidden output from the layer above
    let mut dseq = vec![T::zero(); steps * n * hd];
    for (l, layer) in cache.layers.iter().enumerate().rev() {
        let input = &cache.inputs[l];
        let (w_ih, w_hh) = &cache.weights[l];
        let d = w_ih.len() / g4;
        let (gates, cells, hiddens) = (&cache.gates[l], &cache.cells[l], &cache.hiddens[l]);
        let mut dh = if l + 1 == cache.layers.len() {
            dy.data.clone()
        } else {
            vec![T::zero(); n * hd]
        };
        let mut dc = vec![T::zero(); n * hd];
        let mut dh_prev = vec![T::zero(); n * hd];
        let mut dz_all = vec![T::zero(); steps * n * g4];
        for t in (0..steps).rev() {
            for (a, b) in dh.iter_mut().zip(&dseq[t * n * hd..][..n * hd]) {
                *a += *b;
            }
            let dz = &mut dz_all[t * n * g4..][..n * g4];
            for b in 0..n {
                if t >= cache.lengths[b] {
                    continue;
                }
                let gr = &gates[(t * n + b) * g4..][..g4];
                let prev = t * n * hd + b * hd;
                let cur = (t + 1) * n * hd + b * hd;
                for k in 0..hd {
                    let (i, f, g, o) = (gr[k], gr[hd + k], gr[2 * hd + k], gr[3 * hd + k]);
                    let tc = cells[cur + k].tanh();
                    let dhk = dh[b * hd + k];
                    let dck = dc[b * hd + k] + dhk * o * (T::one() - tc * tc);
                    dz[b * g4 + k] = dck * g * i * (T::one() - i);
                    dz[b * g4 + hd + k] = dck * cells[prev + k] * f * (T::one() - f);
                    dz[b * g4 + 2 * hd + k] = dck * i * (T::one() - g * g);
                    dz[b * g4 + 3 * hd + k] = dhk * tc * o * (T::one() - o);
                    dc[b * hd + k] = dck * f;
                }
            }
            gemm(n, g4, hd, dz, false, w_hh, false, &mut dh_prev, false);
            for b in 0..n {
                if t >= cache.lengths[b] {
                    dh_prev[b * hd..(b + 1) * hd].copy_from_slice(&dh[b * hd..(b + 1) * hd]);
                }
            }
            std::mem::swap(&mut dh, &mut dh_prev);
        }
        let dz_all = &dz_all;
        acc(layer.b, &mut |db| {
            for row in dz_all.chunks(g4) {
                db.iter_mut().zip(row).for_each(|(a, r)| *a += *r);
            }
        });
        acc(layer.w_ih, &mut |dw| gemm(g4, steps * n, d, dz_all, true, input, false, dw, true));
        acc(layer.w_hh, &mut |dw| {
            gemm(g4, steps * n, hd, dz_all, true, &hiddens[..steps * n * hd], false, dw, true)
        });
        let mut dx = vec![T::zero(); steps * n * d];
        gemm(steps * n, g4, d, dz_all, false, w_ih, false, &mut dx, false);
        if l == 0 {
            acc(cache.x, &mut |gx| {
                for b in 0..n {
                    for t in 0..steps {
                        for (a, v) in gx[(b * steps + t) * d..][..d].iter_mut().zip(&dx[(t * n + b) * d..][..d]) {
                            *a += *v;
                        }
                    }
                }
            });
        } else {
            dseq = dx;
        }
    }
}
