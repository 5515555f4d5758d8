//! Reverse-mode tape. Every op appends a node holding its output and whatever
//! it needs for the backward pass; `backward` walks the nodes in reverse.

use super::lstm::{self, LstmCache, LstmLayer};
use super::tensor::{gemm, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Running statistics of a batch-norm layer, updated in train mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> BnStats<T> {
    pub fn new(c: usize) -> Self {
        BnStats {
            mean: vec![T::zero(); c],
            var: vec![T::one(); c],
        }
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Conv2dSpec {
    pub const SAME3: Conv2dSpec = Conv2dSpec {
        stride: (1, 1),
        pad: (1, 1),
    };
    pub const POINT: Conv2dSpec = Conv2dSpec {
        stride: (1, 1),
        pad: (0, 0),
    };

    pub fn out_size(&self, h: usize, w: usize, kh: usize, kw: usize) -> Option<(usize, usize)> {
        let hp = h + 2 * self.pad.0;
        let wp = w + 2 * self.pad.1;
        (hp >= kh && wp >= kw).then(|| ((hp - kh) / self.stride.0 + 1, (wp - kw) / self.stride.1 + 1))
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Relu(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: Conv2dSpec,
    },
    BatchNorm {
        x: Var,
        gamma: Option<Var>,
        beta: Option<Var>,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    AvgPool {
        x: Var,
        k: (usize, usize),
        s: (usize, usize),
    },
    GlobalAvgPool {
        x: Var,
        valid_w: Vec<usize>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Lstm(Box<LstmCache<T>>),
    Film {
        h: Var,
        gamma: Var,
        beta: Var,
    },
    Concat(Var, Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ToSequence(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    WeightedSum {
        x: Var,
        w: Vec<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Relu(_) => "relu",
            Op::Conv2d { .. } => "conv2d",
            Op::BatchNorm { .. } => "batchnorm2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::AvgPool { .. } => "avgpool2d",
            Op::GlobalAvgPool { .. } => "global_avg_pool",
            Op::Linear { .. } => "linear",
            Op::Embedding { .. } => "embedding",
            Op::Lstm(_) => "lstm",
            Op::Film { .. } => "film_modulate",
            Op::Concat(..) => "concat",
            Op::SliceCols { .. } => "slice_cols",
            Op::ToSequence(_) => "to_sequence",
            Op::CrossEntropy { .. } => "softmax_cross_entropy",
            Op::WeightedSum { .. } => "weighted_sum",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    /// Batch-norm uses batch statistics (and updates running stats) when set.
    pub train: bool,
    /// Record the first op that produces a non-finite value. Always on in
    /// debug builds.
    pub strict: bool,
    nonfinite: Option<&'static str>,
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn want_rank<T>(op: &'static str, t: &Tensor<T>, rank: usize) -> Result<()> {
    if t.shape.len() != rank {
        return Err(Error::Shape {
            op,
            lhs: t.shape.clone(),
            rhs: vec![rank],
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, kh: usize, kw: usize, spec: Conv2dSpec, oh: usize, ow: usize, cols: &mut [T]) {
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.pad;
    let p = oh * ow;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &mut cols[((ci * kh + ki) * kw + kj) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..][..w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        *d = if ix < 0 || ix >= w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, kh: usize, kw: usize, spec: Conv2dSpec, oh: usize, ow: usize, dx: &mut [T]) {
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.pad;
    let p = oh * ow;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &cols[((ci * kh + ki) * kw + kj) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut dx[(ci * h + iy as usize) * w..][..w];
                    for ox in 0..ow {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Two coordinate channels for an `h x w` map: channel 0 runs -1..1 along
/// `w` (time), channel 1 along `h` (frequency). Size-1 axes are 0.
pub fn coord_maps<T: Real>(h: usize, w: usize) -> Tensor<T> {
    let lin = |i: usize, n: usize| {
        if n <= 1 {
            T::zero()
        } else {
            T::of(-1.0 + 2.0 * i as f64 / (n - 1) as f64)
        }
    };
    let mut data = Vec::with_capacity(2 * h * w);
    for _ in 0..h {
        data.extend((0..w).map(|j| lin(j, w)));
    }
    for i in 0..h {
        data.extend((0..w).map(|_| lin(i, h)));
    }
    Tensor {
        shape: vec![2, h, w],
        data,
    }
}

impl<T: Real> Tape<T> {
    pub fn new(train: bool) -> Self {
        Tape {
            nodes: Vec::new(),
            train,
            strict: cfg!(debug_assertions),
            nonfinite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        if self.strict && self.nonfinite.is_none() && !value.all_finite() {
            self.nonfinite = Some(op.name());
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Error naming the first op that produced NaN or infinity, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.nonfinite {
            Some(op) => Err(Error::NonFinite(op.to_string())),
            None => Ok(()),
        }
    }

    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(shape_err("add", &ta.shape, &tb.shape));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| *x + *y).collect();
        let shape = ta.shape.clone();
        Ok(self.push(Tensor { shape, data }, Op::Add(a, b)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data.iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
        let shape = t.shape.clone();
        self.push(Tensor { shape, data }, Op::Relu(a))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: Conv2dSpec) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        want_rank("conv2d", tx, 4)?;
        want_rank("conv2d", tw, 4)?;
        let (n, c, h, wd) = tx.nchw();
        let (o, cw, kh, kw) = tw.nchw();
        if c != cw {
            return Err(shape_err("conv2d", &tx.shape, &tw.shape));
        }
        let (oh, ow) = spec
            .out_size(h, wd, kh, kw)
            .ok_or_else(|| shape_err("conv2d", &tx.shape, &tw.shape))?;
        if oh == 0 || ow == 0 {
            return Err(shape_err("conv2d", &tx.shape, &tw.shape));
        }
        if let Some(b) = b {
            if self.value(b).shape != [o] {
                return Err(shape_err("conv2d", &tw.shape, &self.value(b).shape));
            }
        }
        let k = c * kh * kw;
        let p = oh * ow;
        let mut cols = vec![T::zero(); k * p];
        let mut out = vec![T::zero(); n * o * p];
        for bi in 0..n {
            im2col(&tx.data[bi * c * h * wd..][..c * h * wd], c, h, wd, kh, kw, spec, oh, ow, &mut cols);
            gemm(o, k, p, &tw.data, false, &cols, false, &mut out[bi * o * p..][..o * p], false);
        }
        if let Some(b) = b {
            let bias = &self.value(b).data;
            for bi in 0..n {
                for (oi, bv) in bias.iter().enumerate() {
                    for y in &mut out[(bi * o + oi) * p..][..p] {
                        *y += *bv;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![n, o, oh, ow],
                data: out,
            },
            Op::Conv2d { x, w, b, spec },
        ))
    }

    /// 2-d batch norm over (n, h, w) per channel. `gamma`/`beta` are `None`
    /// for the non-affine variant.
    pub fn batchnorm2d(&mut self, x: Var, gamma: Option<Var>, beta: Option<Var>, stats: &mut BnStats<T>) -> Result<Var> {
        let tx = self.value(x);
        want_rank("batchnorm2d", tx, 4)?;
        let (n, c, h, w) = tx.nchw();
        if stats.mean.len() != c {
            return Err(shape_err("batchnorm2d", &tx.shape, &[stats.mean.len()]));
        }
        if self.train && n < 2 {
            return Err(Error::InvalidArgument(format!(
                "batchnorm2d in train mode needs a batch of at least 2, got {n}"
            )));
        }
        for p in [gamma, beta].into_iter().flatten() {
            if self.value(p).shape != [c] {
                return Err(shape_err("batchnorm2d", &tx.shape, &self.value(p).shape));
            }
        }
        let hw = h * w;
        let m = (n * hw) as f64;
        let eps = T::of(BN_EPS);
        let mut inv_std = vec![T::zero(); c];
        let mut mean = vec![T::zero(); c];
        if self.train {
            let mom = T::of(BN_MOMENTUM);
            for ci in 0..c {
                let mut s = 0.0;
                for bi in 0..n {
                    s += tx.data[(bi * c + ci) * hw..][..hw].iter().map(|v| v.to_f64().unwrap()).sum::<f64>();
                }
                let mu = s / m;
                let mut ss = 0.0;
                for bi in 0..n {
                    ss += tx.data[(bi * c + ci) * hw..][..hw]
                        .iter()
                        .map(|v| (v.to_f64().unwrap() - mu).powi(2))
                        .sum::<f64>();
                }
                let var = ss / m;
                mean[ci] = T::of(mu);
                inv_std[ci] = T::one() / (T::of(var) + eps).sqrt();
                stats.mean[ci] = (T::one() - mom) * stats.mean[ci] + mom * T::of(mu);
                let unbiased = if m > 1.0 { ss / (m - 1.0) } else { var };
                stats.var[ci] = (T::one() - mom) * stats.var[ci] + mom * T::of(unbiased);
            }
        } else {
            for ci in 0..c {
                mean[ci] = stats.mean[ci];
                inv_std[ci] = T::one() / (stats.var[ci] + eps).sqrt();
            }
        }
        let g = gamma.map(|v| self.value(v).data.clone());
        let b = beta.map(|v| self.value(v).data.clone());
        let tx = self.value(x);
        let mut xhat = vec![T::zero(); tx.len()];
        let mut out = vec![T::zero(); tx.len()];
        for bi in 0..n {
            for ci in 0..c {
                let off = (bi * c + ci) * hw;
                let gc = g.as_ref().map_or(T::one(), |g| g[ci]);
                let bc = b.as_ref().map_or(T::zero(), |b| b[ci]);
                for j in off..off + hw {
                    let xh = (tx.data[j] - mean[ci]) * inv_std[ci];
                    xhat[j] = xh;
                    out[j] = if g.is_some() || b.is_some() { xh * gc + bc } else { xh };
                }
            }
        }
        let train = self.train;
        let shape = tx.shape.clone();
        Ok(self.push(
            Tensor { shape, data: out },
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
        ))
    }

    pub fn maxpool2d(&mut self, x: Var, k: usize, s: usize) -> Result<Var> {
        let tx = self.value(x);
        want_rank("maxpool2d", tx, 4)?;
        let (n, c, h, w) = tx.nchw();
        if h < k || w < k {
            return Err(shape_err("maxpool2d", &tx.shape, &[k, k]));
        }
        let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * s * w + ox * s;
                    for ki in 0..k {
                        for kj in 0..k {
                            let j = base + (oy * s + ki) * w + ox * s + kj;
                            if tx.data[j] > tx.data[best] {
                                best = j;
                            }
                        }
                    }
                    out.push(tx.data[best]);
                    argmax.push(best);
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![n, c, oh, ow],
                data: out,
            },
            Op::MaxPool { x, argmax },
        ))
    }

    pub fn avgpool2d(&mut self, x: Var, k: (usize, usize), s: (usize, usize)) -> Result<Var> {
        let tx = self.value(x);
        want_rank("avgpool2d", tx, 4)?;
        let (n, c, h, w) = tx.nchw();
        if h < k.0 || w < k.1 {
            return Err(shape_err("avgpool2d", &tx.shape, &[k.0, k.1]));
        }
        let (oh, ow) = ((h - k.0) / s.0 + 1, (w - k.1) / s.1 + 1);
        let scale = T::of(1.0 / (k.0 * k.1) as f64);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = T::zero();
                    for ki in 0..k.0 {
                        for kj in 0..k.1 {
                            acc += tx.data[base + (oy * s.0 + ki) * w + ox * s.1 + kj];
                        }
                    }
                    out.push(acc * scale);
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![n, c, oh, ow],
                data: out,
            },
            Op::AvgPool { x, k, s },
        ))
    }

    /// Mean over `h` and the first `valid_w[i]` columns of item `i`
    /// (all columns when `valid_w` is `None`). Output `n x c`.
    pub fn global_avg_pool(&mut self, x: Var, valid_w: Option<&[usize]>) -> Result<Var> {
        let tx = self.value(x);
        want_rank("global_avg_pool", tx, 4)?;
        let (n, c, h, w) = tx.nchw();
        let valid: Vec<usize> = match valid_w {
            Some(v) if v.len() != n => return Err(shape_err("global_avg_pool", &tx.shape, &[v.len()])),
            Some(v) => v.iter().map(|&vw| vw.clamp(1, w)).collect(),
            None => vec![w; n],
        };
        let mut out = Vec::with_capacity(n * c);
        for bi in 0..n {
            let vw = valid[bi];
            let scale = T::of(1.0 / (h * vw) as f64);
            for ci in 0..c {
                let base = (bi * c + ci) * h * w;
                let mut acc = T::zero();
                for y in 0..h {
                    for v in &tx.data[base + y * w..][..vw] {
                        acc += *v;
                    }
                }
                out.push(acc * scale);
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![n, c],
                data: out,
            },
            Op::GlobalAvgPool { x, valid_w: valid },
        ))
    }

    /// `x (n x i)`, `w (o x i)`, `b (o)` -> `x w^T + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        want_rank("linear", tx, 2)?;
        want_rank("linear", tw, 2)?;
        let (n, i) = (tx.shape[0], tx.shape[1]);
        let o = tw.shape[0];
        if tw.shape[1] != i {
            return Err(shape_err("linear", &tx.shape, &tw.shape));
        }
        let mut out = vec![T::zero(); n * o];
        gemm(n, i, o, &tx.data, false, &tw.data, true, &mut out, false);
        if let Some(b) = b {
            let tb = self.value(b);
            if tb.shape != [o] {
                return Err(shape_err("linear", &tw.shape, &tb.shape));
            }
            for row in out.chunks_mut(o) {
                for (y, bv) in row.iter_mut().zip(&tb.data) {
                    *y += *bv;
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![n, o],
                data: out,
            },
            Op::Linear { x, w, b },
        ))
    }

    /// Rows of `table (V x d)` for an `n x len` id grid; output `n x len x d`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], n: usize, len: usize) -> Result<Var> {
        let tt = self.value(table);
        want_rank("embedding", tt, 2)?;
        let (v, d) = (tt.shape[0], tt.shape[1]);
        if ids.len() != n * len {
            return Err(shape_err("embedding", &[n, len], &[ids.len()]));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::InvalidArgument(format!("embedding: id {bad} out of range for {v} rows")));
        }
        let mut out = Vec::with_capacity(n * len * d);
        for &i in ids {
            out.extend_from_slice(&tt.data[i * d..(i + 1) * d]);
        }
        Ok(self.push(
            Tensor {
                shape: vec![n, len, d],
                data: out,
            },
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Stacked LSTM over `x (n x len x d)`; item `i` only consumes its first
    /// `lengths[i]` steps. Returns the top layer's final hidden state `n x H`.
    pub fn lstm(&mut self, x: Var, layers: &[LstmLayer], lengths: &[usize]) -> Result<Var> {
        let (out, cache) = lstm::forward(self, x, layers, lengths)?;
        Ok(self.push(out, Op::Lstm(Box::new(cache))))
    }

    /// Per-channel `gamma * h + beta`; `h` is `n x c x hh x w`, `gamma` and
    /// `beta` are `n x c`.
    pub fn film(&mut self, h: Var, gamma: Var, beta: Var) -> Result<Var> {
        let th = self.value(h);
        want_rank("film_modulate", th, 4)?;
        let (n, c, hh, w) = th.nchw();
        for p in [gamma, beta] {
            if self.value(p).shape != [n, c] {
                return Err(shape_err("film_modulate", &th.shape, &self.value(p).shape));
            }
        }
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        let hw = hh * w;
        let mut out = Vec::with_capacity(th.len());
        for (plane, chunk) in th.data.chunks(hw).enumerate() {
            out.extend(chunk.iter().map(|&v| g[plane] * v + b[plane]));
        }
        let shape = th.shape.clone();
        Ok(self.push(Tensor { shape, data: out }, Op::Film { h, gamma, beta }))
    }

    /// Channel concatenation of two `n x _ x h x w` tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        want_rank("concat", ta, 4)?;
        want_rank("concat", tb, 4)?;
        let (n, ca, h, w) = ta.nchw();
        let (nb, cb, hb, wb) = tb.nchw();
        if (n, h, w) != (nb, hb, wb) {
            return Err(shape_err("concat", &ta.shape, &tb.shape));
        }
        let mut out = Vec::with_capacity(ta.len() + tb.len());
        for bi in 0..n {
            out.extend_from_slice(&ta.data[bi * ca * h * w..][..ca * h * w]);
            out.extend_from_slice(&tb.data[bi * cb * h * w..][..cb * h * w]);
        }
        Ok(self.push(
            Tensor {
                shape: vec![n, ca + cb, h, w],
                data: out,
            },
            Op::Concat(a, b),
        ))
    }

    /// Appends the two coordinate channels to every item of `x`.
    pub fn append_coords(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        want_rank("append_coords", tx, 4)?;
        let (n, _, h, w) = tx.nchw();
        let maps = coord_maps::<T>(h, w);
        let data = (0..n).flat_map(|_| maps.data.iter().copied()).collect();
        let coords = self.leaf(Tensor {
            shape: vec![n, 2, h, w],
            data,
        });
        self.concat_channels(x, coords)
    }

    /// Columns `start..start + len` of an `n x m` matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        want_rank("slice_cols", tx, 2)?;
        let (n, m) = (tx.shape[0], tx.shape[1]);
        if start + len > m {
            return Err(shape_err("slice_cols", &tx.shape, &[start, len]));
        }
        let data = tx.data.chunks(m).flat_map(|r| r[start..start + len].iter().copied()).collect();
        Ok(self.push(
            Tensor {
                shape: vec![n, len],
                data,
            },
            Op::SliceCols { x, start },
        ))
    }

    /// `n x c x h x w` -> `n x w x (c*h)`: time becomes the sequence axis.
    pub fn to_sequence(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        want_rank("to_sequence", tx, 4)?;
        let (n, c, h, w) = tx.nchw();
        let mut out = vec![T::zero(); tx.len()];
        for bi in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for t in 0..w {
                        out[(bi * w + t) * c * h + ci * h + y] = tx.data[((bi * c + ci) * h + y) * w + t];
                    }
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![n, w, c * h],
                data: out,
            },
            Op::ToSequence(x),
        ))
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        want_rank("softmax_cross_entropy", tl, 2)?;
        let (n, k) = (tl.shape[0], tl.shape[1]);
        if labels.len() != n {
            return Err(shape_err("softmax_cross_entropy", &tl.shape, &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "softmax_cross_entropy: label {bad} outside [0, {k})"
            )));
        }
        let mut probs = vec![T::zero(); n * k];
        let mut loss = 0.0;
        for (i, row) in tl.data.chunks(k).enumerate() {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&v| (v - mx).exp()).sum();
            for (p, &v) in probs[i * k..(i + 1) * k].iter_mut().zip(row) {
                *p = (v - mx).exp() / z;
            }
            loss += (z.ln() + mx - row[labels[i]]).to_f64().unwrap();
        }
        Ok(self.push(
            Tensor::scalar(T::of(loss / n as f64)),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// `sum(w * x)` for a fixed weight tensor; gives scalar losses for
    /// gradient checks.
    pub fn weighted_sum(&mut self, x: Var, w: &[T]) -> Result<Var> {
        let tx = self.value(x);
        if tx.len() != w.len() {
            return Err(shape_err("weighted_sum", &tx.shape, &[w.len()]));
        }
        let s: T = tx.data.iter().zip(w).map(|(a, b)| *a * *b).sum();
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x, w: w.to_vec() }))
    }

    pub fn backward(&self, loss: Var) -> Grads<T> {
        let t = self.value(loss);
        self.backward_with(loss, Tensor::full(&t.shape, T::one()))
    }

    /// Backpropagates `seed` as the gradient of `out`.
    pub fn backward_with(&self, out: Var, seed: Tensor<T>) -> Grads<T> {
        let mut g: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            self.backward_node(i, &dy, &mut g);
            g[i] = Some(dy);
        }
        Grads { g }
    }

    fn backward_node(&self, i: usize, dy: &Tensor<T>, g: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            let slot = g[v.0].get_or_insert_with(|| Tensor::zeros(&self.nodes[v.0].value.shape));
            f(&mut slot.data);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    acc(v, &mut |d| d.iter_mut().zip(&dy.data).for_each(|(x, y)| *x += *y));
                }
            }
            Op::Relu(a) => {
                let x = &val(*a).data;
                acc(*a, &mut |d| {
                    for ((dx, &xv), &gy) in d.iter_mut().zip(x).zip(&dy.data) {
                        if xv > T::zero() {
                            *dx += gy;
                        }
                    }
                });
            }
            Op::Conv2d { x, w, b, spec } => {
                let (tx, tw) = (val(*x), val(*w));
                let (n, c, h, wd) = tx.nchw();
                let (o, _, kh, kw) = tw.nchw();
                let (_, _, oh, ow) = node.value.nchw();
                let (k, p) = (c * kh * kw, oh * ow);
                let mut cols = vec![T::zero(); k * p];
                let mut dcols = vec![T::zero(); k * p];
                let mut dw = vec![T::zero(); tw.len()];
                let mut dx = vec![T::zero(); tx.len()];
                for bi in 0..n {
                    let dyb = &dy.data[bi * o * p..][..o * p];
                    im2col(&tx.data[bi * c * h * wd..][..c * h * wd], c, h, wd, kh, kw, *spec, oh, ow, &mut cols);
                    gemm(o, p, k, dyb, false, &cols, true, &mut dw, true);
                    gemm(k, o, p, &tw.data, true, dyb, false, &mut dcols, false);
                    col2im(&dcols, c, h, wd, kh, kw, *spec, oh, ow, &mut dx[bi * c * h * wd..][..c * h * wd]);
                }
                acc(*w, &mut |d| d.iter_mut().zip(&dw).for_each(|(a, b)| *a += *b));
                acc(*x, &mut |d| d.iter_mut().zip(&dx).for_each(|(a, b)| *a += *b));
                if let Some(b) = b {
                    acc(*b, &mut |d| {
                        for bi in 0..n {
                            for (oi, db) in d.iter_mut().enumerate() {
                                *db += dy.data[(bi * o + oi) * p..][..p].iter().copied().sum::<T>();
                            }
                        }
                    });
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (n, c, h, w) = node.value.nchw();
                let hw = h * w;
                let m = T::of((n * hw) as f64);
                let gv = gamma.map(|v| val(v).data.clone());
                let mut sum_dy = vec![T::zero(); c];
                let mut sum_dy_xhat = vec![T::zero(); c];
                for bi in 0..n {
                    for ci in 0..c {
                        let off = (bi * c + ci) * hw;
                        for j in off..off + hw {
                            sum_dy[ci] += dy.data[j];
                            sum_dy_xhat[ci] += dy.data[j] * xhat[j];
                        }
                    }
                }
                if let Some(gm) = gamma {
                    acc(*gm, &mut |d| d.iter_mut().zip(&sum_dy_xhat).for_each(|(a, b)| *a += *b));
                }
                if let Some(bt) = beta {
                    acc(*bt, &mut |d| d.iter_mut().zip(&sum_dy).for_each(|(a, b)| *a += *b));
                }
                acc(*x, &mut |d| {
                    for bi in 0..n {
                        for ci in 0..c {
                            let gc = gv.as_ref().map_or(T::one(), |g| g[ci]);
                            let off = (bi * c + ci) * hw;
                            for j in off..off + hw {
                                d[j] += if *train {
                                    gc * inv_std[ci] / m * (m * dy.data[j] - sum_dy[ci] - xhat[j] * sum_dy_xhat[ci])
                                } else {
                                    gc * inv_std[ci] * dy.data[j]
                                };
                            }
                        }
                    }
                });
            }
            Op::MaxPool { x, argmax } => acc(*x, &mut |d| {
                for (&j, &gy) in argmax.iter().zip(&dy.data) {
                    d[j] += gy;
                }
            }),
            Op::AvgPool { x, k, s } => {
                let (_, _, h, w) = val(*x).nchw();
                let (_, _, oh, ow) = node.value.nchw();
                let scale = T::of(1.0 / (k.0 * k.1) as f64);
                acc(*x, &mut |d| {
                    for (plane, gplane) in dy.data.chunks(oh * ow).enumerate() {
                        let base = plane * h * w;
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let gv = gplane[oy * ow + ox] * scale;
                                for ki in 0..k.0 {
                                    for kj in 0..k.1 {
                                        d[base + (oy * s.0 + ki) * w + ox * s.1 + kj] += gv;
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::GlobalAvgPool { x, valid_w } => {
                let (n, c, h, w) = val(*x).nchw();
                acc(*x, &mut |d| {
                    for bi in 0..n {
                        let vw = valid_w[bi];
                        let scale = T::of(1.0 / (h * vw) as f64);
                        for ci in 0..c {
                            let gv = dy.data[bi * c + ci] * scale;
                            let base = (bi * c + ci) * h * w;
                            for y in 0..h {
                                for v in &mut d[base + y * w..][..vw] {
                                    *v += gv;
                                }
                            }
                        }
                    }
                });
            }
            Op::Linear { x, w, b } => {
                let (tx, tw) = (val(*x), val(*w));
                let (n, i) = (tx.shape[0], tx.shape[1]);
                let o = tw.shape[0];
                acc(*x, &mut |d| gemm(n, o, i, &dy.data, false, &tw.data, false, d, true));
                acc(*w, &mut |d| gemm(o, n, i, &dy.data, true, &tx.data, false, d, true));
                if let Some(b) = b {
                    acc(*b, &mut |d| {
                        for row in dy.data.chunks(o) {
                            d.iter_mut().zip(row).for_each(|(a, r)| *a += *r);
                        }
                    });
                }
            }
            Op::Embedding { table, ids } => {
                let dd = val(*table).shape[1];
                acc(*table, &mut |d| {
                    for (r, &id) in ids.iter().enumerate() {
                        for (a, b) in d[id * dd..(id + 1) * dd].iter_mut().zip(&dy.data[r * dd..(r + 1) * dd]) {
                            *a += *b;
                        }
                    }
                });
            }
            Op::Lstm(cache) => lstm::backward(cache, dy, &mut acc),
            Op::Film { h, gamma, beta } => {
                let th = val(*h);
                let (_, _, hh, w) = th.nchw();
                let hw = hh * w;
                let gm = &val(*gamma).data;
                acc(*h, &mut |d| {
                    for (j, v) in d.iter_mut().enumerate() {
                        *v += gm[j / hw] * dy.data[j];
                    }
                });
                acc(*gamma, &mut |d| {
                    for (plane, v) in d.iter_mut().enumerate() {
                        let r = plane * hw..(plane + 1) * hw;
                        *v += th.data[r.clone()].iter().zip(&dy.data[r]).map(|(a, b)| *a * *b).sum::<T>();
                    }
                });
                acc(*beta, &mut |d| {
                    for (plane, v) in d.iter_mut().enumerate() {
                        *v += dy.data[plane * hw..(plane + 1) * hw].iter().copied().sum::<T>();
                    }
                });
            }
            Op::Concat(a, b) => {
                let (n, ca, h, w) = val(*a).nchw();
                let cb = val(*b).shape[1];
                let (sa, sb) = (ca * h * w, cb * h * w);
                acc(*a, &mut |d| {
                    for bi in 0..n {
                        for (x, y) in d[bi * sa..][..sa].iter_mut().zip(&dy.data[bi * (sa + sb)..][..sa]) {
                            *x += *y;
                        }
                    }
                });
                acc(*b, &mut |d| {
                    for bi in 0..n {
                        for (x, y) in d[bi * sb..][..sb].iter_mut().zip(&dy.data[bi * (sa + sb) + sa..][..sb]) {
                            *x += *y;
                        }
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let m = val(*x).shape[1];
                let len = node.value.shape[1];
                acc(*x, &mut |d| {
                    for (row, grow) in d.chunks_mut(m).zip(dy.data.chunks(len)) {
                        for (a, b) in row[*start..*start + len].iter_mut().zip(grow) {
                            *a += *b;
                        }
                    }
                });
            }
            Op::ToSequence(x) => {
                let (n, c, h, w) = val(*x).nchw();
                acc(*x, &mut |d| {
                    for bi in 0..n {
                        for ci in 0..c {
                            for y in 0..h {
                                for t in 0..w {
                                    d[((bi * c + ci) * h + y) * w + t] += dy.data[(bi * w + t) * c * h + ci * h + y];
                                }
                            }
                        }
                    }
                });
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let k = val(*logits).shape[1];
                let n = labels.len();
                let scale = dy.data[0] / T::of(n as f64);
                acc(*logits, &mut |d| {
                    for (r, &l) in labels.iter().enumerate() {
                        for j in 0..k {
                            let onehot = if j == l { T::one() } else { T::zero() };
                            d[r * k + j] += (probs[r * k + j] - onehot) * scale;
                        }
                    }
                });
            }
            Op::WeightedSum { x, w } => {
                let s = dy.data[0];
                acc(*x, &mut |d| d.iter_mut().zip(w).for_each(|(a, b)| *a += *b * s));
            }
        }
    }
}

/// Gradients indexed by tape variable.
pub struct Grads<T> {
    g: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.g.get(v.0).and_then(|t| t.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.g.get_mut(v.0).and_then(|t| t.take())
    }
}
