use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::net::{Modulation, Model};
use super::train::argmax;
use crate::error::{Error, Result};
use crate::nn::{Tape, Tensor};

/// Non-negative `frames x dims` map aligned with the input features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub frames: usize,
    pub dims: usize,
    pub data: Vec<f32>,
    pub predicted: usize,
}

impl SaliencyMap {
    pub fn get(&self, t: usize, d: usize) -> f32 {
        self.data[t * self.dims + d]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Mean over frames `t0..t1`.
    pub fn mean_in(&self, t0: usize, t1: usize) -> f64 {
        let (t0, t1) = (t0.min(self.frames), t1.min(self.frames));
        if t1 <= t0 {
            return 0.0;
        }
        let s: f64 = self.data[t0 * self.dims..t1 * self.dims].iter().map(|&v| v as f64).sum();
        s / ((t1 - t0) * self.dims) as f64
    }
}

/// Bilinear resize (half-pixel centers, edge clamped) of an `h x w` grid.
pub fn bilinear(src: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    let coord = |o: usize, n_out: usize, n_in: usize| {
        let x = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = x.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, (x - i0 as f64) as f32)
    };
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let (y0, y1, fy) = coord(y, oh, h);
        for x in 0..ow {
            let (x0, x1, fx) = coord(x, ow, w);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Channel-norm of the gradient of the predicted logit with respect to the
/// last modulated activations, upsampled onto the example's feature grid.
pub fn saliency(model: &mut Model<f32>, data: &Dataset, example: usize) -> Result<SaliencyMap> {
    let batch = data.batch::<f32>(&[example]);
    let mut tape = Tape::new(false);
    let fwd = model.forward(&mut tape, &batch, Modulation::Predicted)?;
    let logits = tape.value(fwd.logits);
    let predicted = argmax(&logits.data);
    let mut seed = Tensor::zeros(&logits.shape);
    seed.data[predicted] = 1.0;
    let grads = tape.backward_with(fwd.logits, seed);
    let feat = tape.value(fwd.features);
    let (_, c, h, w) = feat.nchw();
    let g = grads
        .get(fwd.features)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(&feat.shape));
    let mut norms = vec![0f32; h * w];
    for ci in 0..c {
        for (j, n) in norms.iter_mut().enumerate() {
            let v = g.data[ci * h * w + j];
            *n += v * v;
        }
    }
    norms.iter_mut().for_each(|n| *n = n.sqrt());
    let frames = batch.frames[0];
    let dims = batch.audio.shape[2];
    if frames == 0 || dims == 0 {
        return Err(Error::InvalidArgument("saliency on an empty example".into()));
    }
    // only the valid part of the map covers real frames
    let valid = model.stem_width(frames).clamp(1, w);
    let cropped: Vec<f32> = (0..h).flat_map(|y| norms[y * w..y * w + valid].to_vec()).collect();
    // h x valid grid (frequency x time) -> dims x frames, then transpose
    let up = bilinear(&cropped, h, valid, dims, frames);
    let mut data = vec![0f32; frames * dims];
    for d in 0..dims {
        for t in 0..frames {
            data[t * dims + d] = up[d * frames + t];
        }
    }
    Ok(SaliencyMap {
        frames,
        dims,
        data,
        predicted,
    })
}
