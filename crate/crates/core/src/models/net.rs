use super::config::{ModelConfig, ModelKind, ModulationOrder};
use crate::error::{Error, Result};
use crate::nn::{BnStats, fan_in_uniform, normal, uniform, BnId, Bound, Conv2dSpec, LstmLayer, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::rng::{label_seed, rng_from};

/// One padded minibatch. Audio is `n x 1 x n_mels x W` with frequency on
/// the height axis and time on the width axis.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub audio: Tensor<T>,
    /// Valid (unpadded) frames per item.
    pub frames: Vec<usize>,
    /// Row-major `n x max_tokens` token ids, padded with 0.
    pub tokens: Vec<usize>,
    pub token_lens: Vec<usize>,
    pub max_tokens: usize,
    pub labels: Vec<usize>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// How the FiLM layers get their (gamma, beta).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    /// From the controllers.
    Predicted,
    /// Controllers bypassed, gamma = 1 and beta = 0 fed to every FiLM op.
    ForcedIdentity,
    /// FiLM ops skipped entirely.
    Unmodulated,
}

#[derive(Debug)]
pub struct Forward {
    pub logits: Var,
    /// Output of the last modulated layer (last stem block for the FCN).
    pub features: Var,
    pub bound: Bound,
}

#[derive(Debug, Clone)]
struct ConvBn {
    w: ParamId,
    b: ParamId,
    gamma: ParamId,
    beta: ParamId,
    bn: BnId,
    spec: Conv2dSpec,
}

#[derive(Debug, Clone)]
struct ResLayer {
    c1: (ParamId, ParamId),
    c2: (ParamId, ParamId),
    bn: BnId,
}

#[derive(Debug, Clone)]
enum Input {
    Question { embed: ParamId },
    Audio,
}

#[derive(Debug, Clone)]
struct Controller {
    input: Input,
    layers: Vec<(ParamId, ParamId, ParamId)>,
    /// One linear map to `[gamma | beta]` per modulated layer it drives.
    heads: Vec<(ParamId, ParamId)>,
}

#[derive(Debug, Clone)]
enum Tail {
    Fcn {
        extra: ConvBn,
        penult: ConvBn,
        out: (ParamId, ParamId),
    },
    Modulated {
        res: Vec<ResLayer>,
        controllers: Vec<Controller>,
        /// `(controller, head)` per FiLM layer.
        wiring: Vec<(usize, usize)>,
        head_conv: (ParamId, ParamId),
        fc1: (ParamId, ParamId),
        fc2: (ParamId, ParamId),
    },
}

pub struct Model<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    stem: Vec<[ConvBn; 2]>,
    tail: Tail,
}

struct Builder<'a, T> {
    store: ParamStore<T>,
    seed: u64,
    cfg: &'a ModelConfig,
}

impl<T: Real> Builder<'_, T> {
    fn rng(&self, name: &str) -> crate::rng::Rng {
        rng_from(self.seed, &[label_seed(name)])
    }

    fn conv(&mut self, name: &str, o: usize, c: usize, kh: usize, kw: usize) -> (ParamId, ParamId) {
        let w = fan_in_uniform(&[o, c, kh, kw], c * kh * kw, &mut self.rng(name));
        (
            self.store.add(format!("{name}.w"), w),
            self.store.add(format!("{name}.b"), Tensor::zeros(&[o])),
        )
    }

    fn conv_bn(&mut self, name: &str, o: usize, c: usize, k: (usize, usize), spec: Conv2dSpec) -> ConvBn {
        let (w, b) = self.conv(name, o, c, k.0, k.1);
        ConvBn {
            w,
            b,
            gamma: self.store.add(format!("{name}.bn.gamma"), Tensor::full(&[o], T::one())),
            beta: self.store.add(format!("{name}.bn.beta"), Tensor::zeros(&[o])),
            bn: self.store.add_bn(format!("{name}.bn"), o),
            spec,
        }
    }

    fn linear(&mut self, name: &str, o: usize, i: usize) -> (ParamId, ParamId) {
        let w = fan_in_uniform(&[o, i], i, &mut self.rng(name));
        (
            self.store.add(format!("{name}.w"), w),
            self.store.add(format!("{name}.b"), Tensor::zeros(&[o])),
        )
    }

    fn lstm(&mut self, name: &str, input: usize) -> Vec<(ParamId, ParamId, ParamId)> {
        let h = self.cfg.scaled(self.cfg.controller_hidden);
        let bound = 1.0 / (h as f64).sqrt();
        (0..self.cfg.controller_layers)
            .map(|l| {
                let d = if l == 0 { input } else { h };
                let n = format!("{name}.l{l}");
                let w_ih = uniform(&[4 * h, d], bound, &mut self.rng(&format!("{n}.w_ih")));
                let w_hh = uniform(&[4 * h, h], bound, &mut self.rng(&format!("{n}.w_hh")));
                let mut b = Tensor::zeros(&[4 * h]);
                // forget gate starts open
                b.data[h..2 * h].fill(T::one());
                (
                    self.store.add(format!("{n}.w_ih"), w_ih),
                    self.store.add(format!("{n}.w_hh"), w_hh),
                    self.store.add(format!("{n}.b"), b),
                )
            })
            .collect()
    }
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let cfg = config.clone();
        let mut b = Builder {
            store: ParamStore::default(),
            seed: cfg.init_seed,
            cfg: &cfg,
        };

        let mut stem = Vec::new();
        let mut c_in = 1;
        for blk in 0..cfg.stem_blocks {
            let f = cfg.scaled((cfg.stem_base_filters << blk).min(cfg.stem_max_filters));
            let (k1, s1) = if blk == 0 {
                (
                    cfg.first_kernel,
                    Conv2dSpec {
                        stride: cfg.first_stride,
                        pad: cfg.first_pad,
                    },
                )
            } else {
                ((3, 3), Conv2dSpec::SAME3)
            };
            let a = b.conv_bn(&format!("stem{blk}.conv0"), f, c_in, k1, s1);
            let c = b.conv_bn(&format!("stem{blk}.conv1"), f, f, (3, 3), Conv2dSpec::SAME3);
            stem.push([a, c]);
            c_in = f;
        }

        let tail = match cfg.kind {
            ModelKind::Fcn => {
                let top = cfg.scaled(cfg.stem_max_filters);
                let pen = cfg.scaled(cfg.fcn_penultimate);
                Tail::Fcn {
                    extra: b.conv_bn("fcn.conv_extra", top, c_in, (3, 3), Conv2dSpec::SAME3),
                    penult: b.conv_bn("fcn.conv_penult", pen, top, (1, 1), Conv2dSpec::POINT),
                    out: b.conv("fcn.conv_out", cfg.classes, pen, 1, 1),
                }
            }
            ModelKind::Film | ModelKind::Malimo => {
                let m = cfg.scaled(cfg.modulated_filters);
                let n_layers = cfg.film_layers();
                let mut res = Vec::new();
                let mut c = c_in;
                for l in 0..n_layers {
                    let c1 = b.conv(&format!("res{l}.conv1"), m, c + 2, 3, 3);
                    let c2 = b.conv(&format!("res{l}.conv2"), m, m, 3, 3);
                    let bn = b.store.add_bn(format!("res{l}.bn"), m);
                    res.push(ResLayer { c1, c2, bn });
                    c = m;
                }
                let h = cfg.scaled(cfg.controller_hidden);
                let e = cfg.scaled(cfg.embed_dim);
                let mut controllers = Vec::new();
                let embed = b.store.add("question.embed", normal(&[cfg.vocab_size, e], 1.0, &mut b.rng("question.embed")));
                let layers = b.lstm("question.lstm", e);
                let per = if cfg.kind == ModelKind::Film { n_layers } else { cfg.modulated_units };
                let heads = (0..per).map(|k| b.linear(&format!("question.head{k}"), 2 * m, h)).collect();
                controllers.push(Controller {
                    input: Input::Question { embed },
                    layers,
                    heads,
                });
                let mut wiring: Vec<(usize, usize)> = (0..n_layers).map(|l| (0, l)).collect();
                if cfg.kind == ModelKind::Malimo {
                    let hs = stem_height(&cfg)?;
                    if hs < cfg.audio_pool {
                        return Err(Error::InvalidArgument(format!(
                            "stem output height {hs} is smaller than the audio pool window {}",
                            cfg.audio_pool
                        )));
                    }
                    let input = c_in * (hs / cfg.audio_pool);
                    let layers = b.lstm("audio.lstm", input);
                    let heads = (0..per).map(|k| b.linear(&format!("audio.head{k}"), 2 * m, h)).collect();
                    controllers.push(Controller {
                        input: Input::Audio,
                        layers,
                        heads,
                    });
                    let first = match cfg.order {
                        ModulationOrder::QuestionThenAudio => 0,
                        ModulationOrder::AudioThenQuestion => 1,
                    };
                    wiring = (0..n_layers)
                        .map(|l| if l % 2 == 0 { (first, l / 2) } else { (1 - first, l / 2) })
                        .collect();
                }
                let hf = cfg.scaled(cfg.head_filters);
                let hh = cfg.scaled(cfg.head_hidden);
                Tail::Modulated {
                    res,
                    controllers,
                    wiring,
                    head_conv: b.conv("head.conv", hf, m, 1, 1),
                    fc1: b.linear("head.fc1", hh, hf),
                    fc2: b.linear("head.fc2", cfg.classes, hh),
                }
            }
        };
        Ok(Model {
            store: b.store,
            config,
            stem,
            tail,
        })
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Valid stem-output width for an input with `frames` frames.
    pub fn stem_width(&self, frames: usize) -> usize {
        stem_extent(&self.config, frames, 1)
    }

    /// Sequence length the audio controller sees for a `frames`-frame clip.
    pub fn audio_steps(&self, frames: usize) -> Option<usize> {
        (self.config.kind == ModelKind::Malimo).then(|| self.stem_width(frames) / self.config.audio_pool)
    }

    pub fn forward(&mut self, tape: &mut Tape<T>, batch: &Batch<T>, modulation: Modulation) -> Result<Forward> {
        let n = batch.len();
        let mut bound = Bound::default();
        let Model { config, store, stem, tail } = self;
        let config: &ModelConfig = config;
        let mut x = tape.leaf(batch.audio.clone());
        if tape.value(x).shape.len() != 4 || tape.value(x).shape[0] != n {
            return Err(Error::Shape {
                op: "model_input",
                lhs: tape.value(x).shape.clone(),
                rhs: vec![n],
            });
        }
        let conv_bn = |tape: &mut Tape<T>, bound: &mut Bound, store: &mut ParamStore<T>, x: Var, l: &ConvBn| -> Result<Var> {
            let w = bound.var(tape, store, l.w);
            let b = bound.var(tape, store, l.b);
            let y = tape.conv2d(x, w, Some(b), l.spec)?;
            let g = bound.var(tape, store, l.gamma);
            let be = bound.var(tape, store, l.beta);
            let y = tape.batchnorm2d(y, Some(g), Some(be), store.bn_mut(l.bn))?;
            Ok(tape.relu(y))
        };
        for blk in stem.iter() {
            x = conv_bn(tape, &mut bound, store, x, &blk[0])?;
            x = conv_bn(tape, &mut bound, store, x, &blk[1])?;
            let (_, _, h, w) = tape.value(x).nchw();
            if h < 2 || w < 2 {
                return Err(Error::Shape {
                    op: "maxpool2d",
                    lhs: tape.value(x).shape.clone(),
                    rhs: vec![2, 2],
                });
            }
            x = tape.maxpool2d(x, 2, 2)?;
        }
        let stem_out = x;
        let w_out = tape.value(stem_out).shape[3];
        let valid: Vec<usize> = batch.frames.iter().map(|&f| stem_extent(config, f, 1).clamp(1, w_out)).collect();

        match &*tail {
            Tail::Fcn { extra, penult, out } => {
                let y = conv_bn(tape, &mut bound, store, stem_out, extra)?;
                let y = conv_bn(tape, &mut bound, store, y, penult)?;
                let w = bound.var(tape, store, out.0);
                let b = bound.var(tape, store, out.1);
                let y = tape.conv2d(y, w, Some(b), Conv2dSpec::POINT)?;
                let logits = tape.global_avg_pool(y, Some(&valid))?;
                Ok(Forward {
                    logits,
                    features: stem_out,
                    bound,
                })
            }
            Tail::Modulated {
                res,
                controllers,
                wiring,
                head_conv,
                fc1,
                fc2,
            } => {
                let m = config.scaled(config.modulated_filters);
                let mut states = Vec::new();
                if modulation == Modulation::Predicted {
                    for ctl in controllers {
                        let layers: Vec<LstmLayer> = ctl
                            .layers
                            .iter()
                            .map(|&(a, b, c)| LstmLayer {
                                w_ih: bound.var(tape, store, a),
                                w_hh: bound.var(tape, store, b),
                                b: bound.var(tape, store, c),
                            })
                            .collect();
                        let h = match ctl.input {
                            Input::Question { embed } => {
                                let e = bound.var(tape, store, embed);
                                let seq = tape.embedding(e, &batch.tokens, n, batch.max_tokens)?;
                                let lens: Vec<usize> = batch.token_lens.iter().map(|&l| l.min(batch.max_tokens)).collect();
                                tape.lstm(seq, &layers, &lens)?
                            }
                            Input::Audio => {
                                let p = config.audio_pool;
                                let pooled = tape.avgpool2d(stem_out, (p, p), (p, p))?;
                                let steps = tape.value(pooled).shape[3];
                                let seq = tape.to_sequence(pooled)?;
                                let lens: Vec<usize> = valid.iter().map(|&v| (v / p).clamp(1, steps)).collect();
                                tape.lstm(seq, &layers, &lens)?
                            }
                        };
                        states.push(h);
                    }
                }
                let identity = if modulation == Modulation::ForcedIdentity {
                    Some((tape.leaf(Tensor::full(&[n, m], T::one())), tape.leaf(Tensor::zeros(&[n, m]))))
                } else {
                    None
                };
                let mut x = stem_out;
                for (layer, &(ci, hi)) in res.iter().zip(wiring) {
                    let w = ResWeights {
                        c1: (bound.var(tape, store, layer.c1.0), bound.var(tape, store, layer.c1.1)),
                        c2: (bound.var(tape, store, layer.c2.0), bound.var(tape, store, layer.c2.1)),
                    };
                    let gb = match modulation {
                        Modulation::Predicted => {
                            let (hw, hb) = controllers[ci].heads[hi];
                            let (hw, hb) = (bound.var(tape, store, hw), bound.var(tape, store, hb));
                            let gb = tape.linear(states[ci], hw, Some(hb))?;
                            Some((tape.slice_cols(gb, 0, m)?, tape.slice_cols(gb, m, m)?))
                        }
                        Modulation::ForcedIdentity => identity,
                        Modulation::Unmodulated => None,
                    };
                    x = film_residual(tape, x, &w, store.bn_mut(layer.bn), gb)?;
                }
                let features = x;
                let (w, b) = (bound.var(tape, store, head_conv.0), bound.var(tape, store, head_conv.1));
                let y = tape.conv2d(x, w, Some(b), Conv2dSpec::POINT)?;
                let y = tape.relu(y);
                let pooled = tape.global_avg_pool(y, Some(&valid))?;
                let (w, b) = (bound.var(tape, store, fc1.0), bound.var(tape, store, fc1.1));
                let h = tape.linear(pooled, w, Some(b))?;
                let h = tape.relu(h);
                let (w, b) = (bound.var(tape, store, fc2.0), bound.var(tape, store, fc2.1));
                let logits = tape.linear(h, w, Some(b))?;
                Ok(Forward {
                    logits,
                    features,
                    bound,
                })
            }
        }
    }
}

/// Tape variables of one residual FiLM layer's two convolutions.
#[derive(Debug, Clone, Copy)]
pub struct ResWeights {
    pub c1: (Var, Var),
    pub c2: (Var, Var),
}

/// One modulated residual layer: coordinates appended, conv 3x3 + ReLU,
/// conv 3x3, non-affine batch norm, FiLM with `(gamma, beta)` (skipped when
/// `None`), ReLU, plus a skip from the first ReLU.
pub fn film_residual<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    w: &ResWeights,
    bn: &mut BnStats<T>,
    modulation: Option<(Var, Var)>,
) -> Result<Var> {
    let xin = tape.append_coords(x)?;
    let a = tape.conv2d(xin, w.c1.0, Some(w.c1.1), Conv2dSpec::SAME3)?;
    let a = tape.relu(a);
    let y = tape.conv2d(a, w.c2.0, Some(w.c2.1), Conv2dSpec::SAME3)?;
    let mut y = tape.batchnorm2d(y, None, None, bn)?;
    if let Some((gamma, beta)) = modulation {
        y = tape.film(y, gamma, beta)?;
    }
    let y = tape.relu(y);
    tape.add(y, a)
}

/// Extent of an input axis after the stem: `axis` 0 is frequency, 1 is time.
fn stem_extent(cfg: &ModelConfig, n: usize, axis: usize) -> usize {
    let (k, s, p) = if axis == 0 {
        (cfg.first_kernel.0, cfg.first_stride.0, cfg.first_pad.0)
    } else {
        (cfg.first_kernel.1, cfg.first_stride.1, cfg.first_pad.1)
    };
    if n + 2 * p < k {
        return 0;
    }
    let mut e = (n + 2 * p - k) / s + 1;
    for _ in 0..cfg.stem_blocks {
        e /= 2;
    }
    e
}

fn stem_height(cfg: &ModelConfig) -> Result<usize> {
    Ok(stem_extent(cfg, cfg.n_mels, 0))
}

/// Frames needed so the stem (and, for MALiMo, the audio pool) leaves at
/// least one position along time.
pub fn min_frames(cfg: &ModelConfig) -> usize {
    let need = if cfg.kind == ModelKind::Malimo { cfg.audio_pool } else { 1 };
    (1..100_000)
        .find(|&f| stem_extent(cfg, f, 1) >= need)
        .unwrap_or(100_000)
}
