//! Gradient checks, the identity-modulation bypass and parameter counts.

use audioqa_core::features::FeatureMatrix;
use audioqa_core::models::*;
use audioqa_core::nn::*;
use audioqa_core::rng::rng_from;
use rand::Rng as _;

fn rand_t(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = rng_from(seed, &[]);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Max relative error of `f` projected onto fixed random weights.
fn check(inputs: &[Tensor<f64>], f: impl Fn(&mut Tape<f64>, &[Var]) -> audioqa_core::Result<Var>) -> f64 {
    grad_check(inputs, 1e-5, 300, 9, |tape, v| {
        let y = f(tape, v)?;
        let w = rand_t(&[tape.value(y).len()], 77).data;
        tape.weighted_sum(y, &w)
    })
    .unwrap()
    .max_rel_err
}

/// Every tape op, one check each. Returns (name, error) pairs.
pub fn op_gradchecks() -> Vec<(&'static str, f64)> {
    let x = rand_t(&[2, 3, 6, 8], 11);
    let mut out = vec![
        ("relu", check(&[x.clone()], |t, v| Ok(t.relu(v[0])))),
        ("maxpool2d", check(&[x.clone()], |t, v| t.maxpool2d(v[0], 2, 2))),
        ("avgpool2d", check(&[x.clone()], |t, v| t.avgpool2d(v[0], (2, 4), (2, 4)))),
        ("global_avg_pool", check(&[x.clone()], |t, v| t.global_avg_pool(v[0], Some(&[5, 8])))),
        ("add", check(&[x.clone(), rand_t(&[2, 3, 6, 8], 12)], |t, v| t.add(v[0], v[1]))),
        ("concat_channels", check(&[x.clone(), rand_t(&[2, 1, 6, 8], 13)], |t, v| t.concat_channels(v[0], v[1]))),
        ("to_sequence", check(&[x.clone()], |t, v| t.to_sequence(v[0]))),
        ("append_coords", check(&[x.clone()], |t, v| t.append_coords(v[0]))),
        ("slice_cols", check(&[rand_t(&[3, 10], 14)], |t, v| t.slice_cols(v[0], 2, 5))),
        ("film", check(&[rand_t(&[2, 3, 4, 5], 20), rand_t(&[2, 3], 21), rand_t(&[2, 3], 22)], |t, v| t.film(v[0], v[1], v[2]))),
        (
            "conv2d first layer",
            check(&[rand_t(&[2, 2, 7, 20], 30), rand_t(&[3, 2, 3, 12], 31), rand_t(&[3], 32)], |t, v| {
                t.conv2d(v[0], v[1], Some(v[2]), Conv2dSpec { stride: (1, 9), pad: (1, 0) })
            }),
        ),
        (
            "conv2d 3x3",
            check(&[rand_t(&[2, 3, 5, 5], 33), rand_t(&[4, 3, 3, 3], 34), rand_t(&[4], 35)], |t, v| {
                t.conv2d(v[0], v[1], Some(v[2]), Conv2dSpec::SAME3)
            }),
        ),
        ("linear", check(&[rand_t(&[4, 6], 36), rand_t(&[5, 6], 37), rand_t(&[5], 38)], |t, v| t.linear(v[0], v[1], Some(v[2])))),
        ("embedding", check(&[rand_t(&[7, 3], 39)], |t, v| t.embedding(v[0], &[1, 4, 4, 0, 6, 2], 2, 3))),
        ("cross_entropy", check(&[rand_t(&[3, 5], 45)], |t, v| t.cross_entropy(v[0], &[4, 0, 2]))),
    ];
    let bx = rand_t(&[3, 2, 3, 4], 40);
    for (name, train) in [("batchnorm2d train", true), ("batchnorm2d eval", false)] {
        out.push((
            name,
            check(&[bx.clone(), rand_t(&[2], 41), rand_t(&[2], 42)], |t, v| {
                t.train = train;
                let mut s = BnStats::<f64>::new(2);
                s.mean = vec![0.1, -0.2];
                s.var = vec![0.5, 2.0];
                t.batchnorm2d(v[0], Some(v[1]), Some(v[2]), &mut s)
            }),
        ));
    }
    out.push((
        "batchnorm2d no affine",
        check(&[bx], |t, v| t.batchnorm2d(v[0], None, None, &mut BnStats::new(2))),
    ));
    let h = 4;
    let lstm_in = vec![
        rand_t(&[3, 5, 3], 50),
        rand_t(&[4 * h, 3], 51),
        rand_t(&[4 * h, h], 52),
        rand_t(&[4 * h], 53),
        rand_t(&[4 * h, h], 54),
        rand_t(&[4 * h, h], 55),
        rand_t(&[4 * h], 56),
    ];
    out.push((
        "lstm 2 layers",
        check(&lstm_in, |t, v| {
            let layers = [
                LstmLayer { w_ih: v[1], w_hh: v[2], b: v[3] },
                LstmLayer { w_ih: v[4], w_hh: v[5], b: v[6] },
            ];
            t.lstm(v[0], &layers, &[5, 3, 1])
        }),
    ));
    out
}

/// Inputs of one FiLM layer, or of a MALiMo block (two layers) with
/// `layers = 2`: x, then per layer conv1 (w, b), conv2 (w, b) and the
/// modulation (gamma, beta).
fn block_inputs(layers: usize, seed: u64) -> Vec<Tensor<f64>> {
    let (c, m) = (3, 4);
    let mut shapes: Vec<Vec<usize>> = vec![vec![2, c, 5, 6]];
    for l in 0..layers {
        let cin = if l == 0 { c } else { m };
        shapes.extend([vec![m, cin + 2, 3, 3], vec![m], vec![m, m, 3, 3], vec![m], vec![2, m], vec![2, m]]);
    }
    shapes.iter().enumerate().map(|(i, s)| rand_t(s, seed + i as u64)).collect()
}

/// Index of layer `l`'s conv2 bias in `block_inputs`.
fn conv2_bias(l: usize) -> usize {
    4 + 6 * l
}

fn block_loss(t: &mut Tape<f64>, v: &[Var], layers: usize) -> audioqa_core::Result<Var> {
    let mut y = v[0];
    for l in 0..layers {
        let k = 1 + 6 * l;
        let w = ResWeights { c1: (v[k], v[k + 1]), c2: (v[k + 2], v[k + 3]) };
        y = film_residual(t, y, &w, &mut BnStats::new(4), Some((v[k + 4], v[k + 5])))?;
    }
    let proj = rand_t(&[t.value(y).len()], 99).data;
    t.weighted_sum(y, &proj)
}

/// Max relative error over every input except the conv2 biases, plus the
/// largest absolute gradient (analytic or numeric) seen on those biases.
///
/// A conv2 bias feeds straight into batch norm, which removes any
/// per-channel constant, so its true gradient is exactly zero and a
/// relative error would only measure round-off.
fn block_check(layers: usize, seed: u64) -> (f64, f64) {
    let all = block_inputs(layers, seed);
    let fixed: Vec<usize> = (0..layers).map(conv2_bias).collect();
    let free: Vec<usize> = (0..all.len()).filter(|i| !fixed.contains(i)).collect();
    let checked: Vec<Tensor<f64>> = free.iter().map(|&i| all[i].clone()).collect();
    let rep = grad_check(&checked, 1e-5, 400, 1, |t, v| {
        let mut vars = Vec::with_capacity(all.len());
        let mut it = v.iter();
        for (i, x) in all.iter().enumerate() {
            vars.push(if fixed.contains(&i) { t.leaf(x.clone()) } else { *it.next().unwrap() });
        }
        block_loss(t, &vars, layers)
    })
    .unwrap();

    let loss_at = |inputs: &[Tensor<f64>]| {
        let mut t = Tape::new(true);
        let v: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone())).collect();
        let out = block_loss(&mut t, &v, layers).unwrap();
        (t, v, out)
    };
    let (t, v, out) = loss_at(&all);
    let grads = t.backward(out);
    let mut zero_err = 0.0f64;
    for &i in &fixed {
        if let Some(g) = grads.get(v[i]) {
            zero_err = g.data.iter().fold(zero_err, |a, x| a.max(x.abs()));
        }
        for j in 0..all[i].len() {
            let mut plus = all.clone();
            plus[i].data[j] += 1e-5;
            let mut minus = all.clone();
            minus[i].data[j] -= 1e-5;
            let (tp, _, op) = loss_at(&plus);
            let (tm, _, om) = loss_at(&minus);
            let numeric = (tp.value(op).data[0] - tm.value(om).data[0]) / 2e-5;
            zero_err = zero_err.max(numeric.abs());
        }
    }
    (rep.max_rel_err, zero_err)
}

/// ((rel err, zero-gradient bias abs) for a FiLM layer, same for a MALiMo
/// block).
pub fn block_gradchecks() -> ((f64, f64), (f64, f64)) {
    (block_check(1, 100), block_check(2, 200))
}

pub fn random_dataset(n_clips: usize, frames: usize, n_questions: usize, vocab: usize, seed: u64) -> Dataset {
    let mut rng = rng_from(seed, &[]);
    let clips: Vec<FeatureMatrix> = (0..n_clips)
        .map(|k| {
            let t = frames + 20 * (k % 3);
            FeatureMatrix::new(t, 64, (0..t * 64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        })
        .collect();
    let examples = (0..n_questions)
        .map(|i| Example {
            question_id: format!("q{i}"),
            template_id: format!("t{}", i % 4),
            clip: i % n_clips,
            tokens: (0..rng.random_range(5..9)).map(|_| rng.random_range(2..vocab)).collect(),
            label: rng.random_range(0..36),
        })
        .collect();
    Dataset {
        clip_ids: (0..n_clips).map(|k| format!("c{k}")).collect(),
        clips,
        examples,
    }
}

pub fn tiny(kind: ModelKind, units: usize, seed: u64) -> ModelConfig {
    let base = match kind {
        ModelKind::Fcn => ModelConfig::fcn(),
        ModelKind::Film => ModelConfig::film(units, 512, 12),
        ModelKind::Malimo => ModelConfig::malimo(units, 12),
    };
    ModelConfig {
        init_seed: seed,
        ..base.with_scale(16)
    }
}

/// End-to-end check of the 1-unit FiLM and MALiMo models in double precision.
pub fn model_gradchecks() -> Vec<(ModelKind, f64)> {
    [ModelKind::Film, ModelKind::Malimo]
        .into_iter()
        .map(|kind| {
            let cfg = tiny(kind, 1, 21);
            let data = random_dataset(2, min_frames(&cfg), 2, 12, 22);
            let mut model = Model::<f64>::new(cfg).unwrap();
            let rep = grad_check_model(&mut model, &data.batch(&[0, 1]), 1e-5, 250, 3).unwrap();
            (kind, rep.max_rel_err)
        })
        .collect()
}

/// Whether forcing gamma = 1, beta = 0 reproduces the unmodulated stack bit
/// for bit, per (kind, train mode).
pub fn identity_bypass() -> Vec<(ModelKind, bool, bool)> {
    let mut out = Vec::new();
    for kind in [ModelKind::Film, ModelKind::Malimo] {
        let cfg = tiny(kind, 2, 5);
        let data = random_dataset(4, min_frames(&cfg), 4, 12, 6);
        let batch = data.batch::<f32>(&[0, 1, 2, 3]);
        for train in [false, true] {
            let mut model = Model::<f32>::new(cfg.clone()).unwrap();
            let mut run = |m| {
                let mut tape = Tape::new(train);
                let f = model.forward(&mut tape, &batch, m).unwrap();
                tape.value(f.logits).data.iter().map(|v| v.to_bits()).collect::<Vec<u32>>()
            };
            let forced = run(Modulation::ForcedIdentity);
            let plain = run(Modulation::Unmodulated);
            out.push((kind, train, forced == plain));
        }
    }
    out
}

fn conv(c: usize, o: usize, kh: usize, kw: usize) -> usize {
    c * o * kh * kw + o
}

/// Convolutional blocks of two batch-normalized 3x3 layers, the first one
/// with a 3x12 kernel; filters double from 32 up to 512.
fn oracle_stem(blocks: usize, s: &dyn Fn(usize) -> usize) -> (usize, usize) {
    let mut total = 0;
    let mut c = 1;
    for b in 0..blocks {
        let f = s((32 << b).min(512));
        let kw = if b == 0 { 12 } else { 3 };
        total += conv(c, f, 3, kw) + 2 * f + conv(f, f, 3, 3) + 2 * f;
        c = f;
    }
    (total, c)
}

pub fn oracle_fcn(scale: usize) -> usize {
    let s = |x: usize| (x / scale).max(1);
    let (stem, c) = oracle_stem(5, &s);
    let (top, pen) = (s(512), s(1024));
    stem + conv(c, top, 3, 3) + 2 * top + conv(top, pen, 1, 1) + 2 * pen + conv(pen, 36, 1, 1)
}

pub fn oracle_modulated(kind: ModelKind, units: usize, vocab: usize, scale: usize) -> usize {
    let s = |x: usize| (x / scale).max(1);
    let (stem, c) = oracle_stem(3, &s);
    let (m, h, e) = (s(128), s(512), s(256));
    let layers = if kind == ModelKind::Film { units } else { 2 * units };
    let mut total = stem;
    let mut cin = c;
    for _ in 0..layers {
        // coordinate maps add two input channels
        total += conv(cin + 2, m, 3, 3) + conv(m, m, 3, 3);
        cin = m;
    }
    let lstm = |d: usize| 4 * h * (d + h) + 4 * h + 4 * h * (2 * h) + 4 * h;
    let head = |k: usize| k * (h * 2 * m + 2 * m);
    total += vocab * e + lstm(e) + head(units);
    if kind == ModelKind::Malimo {
        total += lstm(c) + head(units);
    }
    total + conv(m, s(512), 1, 1) + s(512) * s(1024) + s(1024) + s(1024) * 36 + 36
}

pub fn count(cfg: ModelConfig) -> usize {
    Model::<f32>::new(cfg).unwrap().num_params()
}
