//! Acceptance run: every criterion prints one PASS/FAIL line and the binary
//! exits nonzero if any failed.

mod neural;
mod small_world;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use audioqa_cli::pipeline::{self, Layout};
use audioqa_cli::{verify, RunConfig};
use audioqa_core::answer::Answer;
use audioqa_core::ast::*;
use audioqa_core::clips::{generate_split, sequence_key, ClipAnnotation, SplitName};
use audioqa_core::evalkit::{evaluate, template_supports, BaselineKind, Baselines, EvalItem};
use audioqa_core::features::{mfsc_with, read_features, FeatureConfig};
use audioqa_core::models::{self, min_frames, Dataset, Model, ModelKind, TrainConfig, Vocab};
use audioqa_core::nn::Hyperparams;
use audioqa_core::oracle;
use audioqa_core::questions::{read_questions, write_questions, QuestionInstance};
use audioqa_core::rng::rng_from;
use rand::Rng as _;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn desk_config(root: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.output = root.to_path_buf();
    cfg.model.scale = 16;
    cfg.train.hyper.epochs = 1;
    cfg
}

/// Every stage of the pipeline, including a short training run so the
/// model's metrics are part of the output.
fn desk_run(cfg: &RunConfig) -> anyhow::Result<Duration> {
    let t = Instant::now();
    pipeline::gen_events(cfg)?;
    pipeline::gen_clips(cfg)?;
    pipeline::gen_questions(cfg)?;
    let generation = t.elapsed();
    pipeline::features(cfg)?;
    pipeline::train(cfg, |_| {})?;
    pipeline::eval(cfg)?;
    Ok(generation)
}

struct Desk {
    cfg: RunConfig,
    generation: Duration,
    _dir: tempfile::TempDir,
}

fn all_questions(cfg: &RunConfig) -> Vec<(SplitName, Vec<QuestionInstance>)> {
    SplitName::ALL
        .into_iter()
        .map(|s| (s, pipeline::load_questions(cfg, s).unwrap()))
        .collect()
}

fn c1_dataset_invariants(desk: &Desk) -> Outcome {
    let cfg = &desk.cfg;
    let out = verify::verify(cfg).map_err(|e| e.to_string())?;
    ensure!(out.ok(), "verify reported {} violations, first: {}", out.violations.len(), out.violations[0]);
    let lib = pipeline::load_library(cfg).unwrap();
    let mut train_keys = HashSet::new();
    let mut checked = 0;
    for split in SplitName::ALL {
        let anns = pipeline::load_annotations(cfg, split).unwrap();
        let noisy = anns.iter().filter(|a| a.has_noise).count();
        ensure!(2 * noisy == anns.len(), "{split:?}: {noisy} of {} clips noisy", anns.len());
        for a in &anns {
            ensure!((5..=12).contains(&a.events.len()), "{}: {} events", a.clip_id, a.events.len());
            for w in a.events.windows(2) {
                let overlap = w[0].end_s - w[1].start_s;
                ensure!(overlap <= 0.5 + 1e-9, "{}: overlap {overlap:.4} s", a.clip_id);
                let continuous = lib.event_type(&w[0].type_id).unwrap().is_continuous();
                ensure!(!(continuous && w[0].type_id == w[1].type_id), "{}: adjacent {}", a.clip_id, w[0].type_id);
            }
            let key = sequence_key(a);
            if split == SplitName::Train {
                train_keys.insert(key);
            } else {
                ensure!(!train_keys.contains(&key), "{} repeats a training sequence", a.clip_id);
            }
        }
        let qs = pipeline::load_questions(cfg, split).unwrap();
        let report = oracle::verify_dataset(&qs, &anns);
        ensure!(report.is_consistent(), "{split:?}: {} oracle mismatches", report.mismatches.len());
        checked += qs.len();
    }
    Ok(format!(
        "verify clean, {checked} questions agree with the oracle, generation {:.1} s",
        desk.generation.as_secs_f64()
    ))
}

fn c2_balance(desk: &Desk) -> Outcome {
    let mut cfg = desk.cfg.clone();
    cfg.counts.n_train = 2000;
    let lib = pipeline::load_library(&cfg).unwrap();
    let engine = pipeline::engine(&cfg, &lib).unwrap();
    let splits = generate_split(&cfg.split_config(), &lib).map_err(|e| e.to_string())?;
    let gen = cfg.generation();
    let (qs, _) = engine
        .generate_split(SplitName::Train, &splits.train.annotations(), &gen)
        .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    write_questions(&path, &qs).unwrap();
    let back = read_questions(&path).unwrap();
    ensure!(back == qs, "question file does not round-trip");

    let mut hist: BTreeMap<&str, BTreeMap<&Answer, usize>> = BTreeMap::new();
    for q in &back {
        *hist.entry(&q.template_id).or_default().entry(&q.answer).or_default() += 1;
    }
    let mut worst = (0.0, String::new());
    let mut checked = 0;
    for (t, h) in &hist {
        let total: usize = h.values().sum();
        if total < gen.warmup {
            continue;
        }
        let support = engine.support_of(t).unwrap();
        let counts: Vec<usize> = support.iter().map(|a| h.get(a).copied().unwrap_or(0)).collect();
        let gap = (counts.iter().max().unwrap() - counts.iter().min().unwrap()) as f64 / total as f64;
        checked += 1;
        if gap > worst.0 {
            worst = (gap, t.to_string());
        }
    }
    ensure!(checked > 0, "no template passed warm-up");
    ensure!(worst.0 <= 0.05, "template {} has gap {:.4}", worst.1, worst.0);
    Ok(format!(
        "{} questions, {checked} templates past warm-up, max gap {:.4}",
        back.len(),
        worst.0
    ))
}

fn c3_answer_vocabulary(desk: &Desk) -> Outcome {
    let lib = pipeline::load_library(&desk.cfg).unwrap();
    let answers = pipeline::answer_vocab(&lib);
    // yes, no, one per event type, nothing, and the counts 0 to 12
    let expected = 2 + lib.types.len() + 1 + 13;
    ensure!(lib.types.len() == 20, "{} event types", lib.types.len());
    ensure!(answers.len() == 36 && expected == 36, "{} answers", answers.len());
    let mut n = 0;
    for (split, qs) in all_questions(&desk.cfg) {
        for q in qs {
            ensure!(answers.contains(&q.answer), "{split:?} {}: answer {} outside the vocabulary", q.question_id, q.answer);
            n += 1;
        }
    }
    Ok(format!("36 answers, all {n} emitted answers are members"))
}

fn c4_small_world() -> Outcome {
    let t = Instant::now();
    let family = small_world::AstFamily::build();
    ensure!(family.all_valid(), "AST family contains an invalid tree");
    ensure!(family.max_depth() == 3, "AST family depth {}", family.max_depth());
    let worlds = small_world::worlds();
    let mut bad = 0;
    let mut first = None;
    for w in &worlds {
        let (b, f) = family.compare(w);
        bad += b;
        if first.is_none() {
            first = f;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(bad == 0, "{bad} disagreements, first: {}", first.unwrap_or_default());
    ensure!(secs < 300.0, "took {secs:.1} s");
    Ok(format!(
        "{} worlds x {} queries, zero disagreements, {secs:.1} s",
        worlds.len(),
        family.len()
    ))
}

const MONO_TYPES: [&str; 4] = ["a", "b", "c", "d"];

fn rand_selector(rng: &mut impl rand::Rng, depth: usize) -> Selector {
    match rng.random_range(0..if depth > 1 { 5 } else { 4 }) {
        0 => Selector::by_type(MONO_TYPES[rng.random_range(0..4)]),
        1 => Selector::nth(rng.random_range(1..=8)),
        2 => Selector::ByOrdinal(Ordinal::Last),
        3 => Selector::Superlative {
            attr: if rng.random_bool(0.5) { Attr::Loudness } else { Attr::Duration },
            ext: if rng.random_bool(0.5) { Extreme::Max } else { Extreme::Min },
        },
        _ => Selector::relative(rand_selector(rng, depth - 1), rand_dir(rng), true),
    }
}

fn rand_dir(rng: &mut impl rand::Rng) -> Direction {
    if rng.random_bool(0.5) {
        Direction::Before
    } else {
        Direction::After
    }
}

fn loud_selector(rng: &mut impl rand::Rng) -> Selector {
    let s = Selector::Superlative {
        attr: Attr::Loudness,
        ext: if rng.random_bool(0.5) { Extreme::Max } else { Extreme::Min },
    };
    if rng.random_bool(0.3) {
        Selector::relative(s, rand_dir(rng), true)
    } else {
        s
    }
}

fn loud_set(rng: &mut impl rand::Rng) -> SetSelector {
    let cmp = if rng.random_bool(0.5) { Cmp::Louder } else { Cmp::Quieter };
    let set = SetSelector::AttrFiltered {
        attr: Attr::Loudness,
        cmp,
        anchor: Box::new(rand_selector(rng, 2)),
    };
    if rng.random_bool(0.3) {
        SetSelector::OfType {
            type_id: MONO_TYPES[rng.random_range(0..4)].into(),
            set: Box::new(set),
        }
    } else {
        set
    }
}

/// A random query whose answer depends on loudness.
fn loud_query(rng: &mut impl rand::Rng) -> Query {
    match rng.random_range(0..6) {
        0 => Query::QueryType(loud_selector(rng)),
        1 => Query::CompareAttr {
            a: rand_selector(rng, 2),
            b: rand_selector(rng, 2),
            attr: Attr::Loudness,
            rel: [AttrRel::Greater, AttrRel::Less, AttrRel::Equal][rng.random_range(0..3)],
        },
        2 => Query::Exist(loud_set(rng)),
        3 => Query::Count(loud_set(rng)),
        4 => Query::CompareInt {
            a: loud_set(rng),
            b: if rng.random_bool(0.5) {
                loud_set(rng)
            } else {
                SetSelector::all_of_type(MONO_TYPES[rng.random_range(0..4)])
            },
            rel: [IntRel::More, IntRel::Fewer, IntRel::Equal][rng.random_range(0..3)],
        },
        _ => Query::CompareSame {
            a: loud_selector(rng),
            b: rand_selector(rng, 2),
        },
    }
}

fn rand_annotation(rng: &mut impl rand::Rng) -> ClipAnnotation {
    let n = rng.random_range(1..=10);
    // coarse grids so that ties are exact and distinct values stay far apart
    let ev: Vec<(&str, f64, f64)> = (0..n)
        .map(|_| {
            (
                MONO_TYPES[rng.random_range(0..4)],
                0.5 * rng.random_range(1..=8) as f64,
                0.1 * rng.random_range(1..=20) as f64,
            )
        })
        .collect();
    ClipAnnotation::from_events("m", &ev)
}

/// A random strictly increasing map on positive reals.
fn rand_transform(rng: &mut impl rand::Rng) -> (String, Box<dyn Fn(f64) -> f64>) {
    match rng.random_range(0..5) {
        0 => {
            let (a, b) = (rng.random_range(0.1..10.0), rng.random_range(-5.0..5.0));
            (format!("{a:.3}x{b:+.3}"), Box::new(move |x| a * x + b))
        }
        1 => {
            let p = rng.random_range(0.2..4.0);
            (format!("x^{p:.3}"), Box::new(move |x: f64| x.powf(p)))
        }
        2 => {
            let k = rng.random_range(0.1..3.0);
            (format!("exp({k:.3}x)"), Box::new(move |x: f64| (k * x).exp()))
        }
        3 => ("ln x".into(), Box::new(f64::ln)),
        _ => ("x^3+x".into(), Box::new(|x: f64| x * x * x + x)),
    }
}

fn c5_monotone_invariance() -> Outcome {
    let mut rng = rng_from(5, &[]);
    let (mut pairs, mut draws) = (0, 0);
    while pairs < 1000 {
        draws += 1;
        ensure!(draws < 1_000_000, "could not find 1000 well-posed pairs");
        let ann = rand_annotation(&mut rng);
        let q = loud_query(&mut rng);
        let Some(before) = oracle::evaluate(&q, &ann) else {
            continue;
        };
        let (name, f) = rand_transform(&mut rng);
        let mut moved = ann.clone();
        for e in &mut moved.events {
            e.loudness = f(e.loudness);
        }
        let after = oracle::evaluate(&q, &moved);
        ensure!(
            after.as_ref() == Some(&before),
            "{} under {name}: {before:?} became {after:?}",
            serde_json::to_string(&q).unwrap()
        );
        pairs += 1;
    }
    Ok(format!("1000 well-posed pairs ({draws} drawn), all answers unchanged"))
}

fn c6_features(desk: &Desk) -> Outcome {
    let fc = FeatureConfig::default();
    let sr = 16_000;
    let (len, stride) = (fc.frame_len(sr), fc.stride(sr));
    let mut rng = rng_from(6, &[]);
    for _ in 0..100 {
        let n = rng.random_range(0..3 * sr as usize);
        // count window positions directly
        let fits = (0..).take_while(|t| t * stride + len <= n).count();
        let got = mfsc_with(&vec![0.0; n], sr, &fc).ok().map(|m| m.frames);
        let expected = (fits > 0).then_some(fits);
        ensure!(got == expected && fc.num_frames(n, sr) == expected, "{n} samples: {got:?} frames, expected {expected:?}");
    }
    let zero = mfsc_with(&vec![0.0; sr as usize], sr, &fc).unwrap();
    let floor = (1e-10f64).ln() as f32;
    ensure!(zero.data.iter().all(|&v| v == floor), "zero signal does not sit on the floor");

    let anns = pipeline::load_annotations(&desk.cfg, SplitName::Train).unwrap();
    let dir = Layout::new(&desk.cfg.output).features_dir(SplitName::Train);
    let d = fc.n_mels;
    let (mut sum, mut sq, mut n) = (vec![0.0f64; d], vec![0.0f64; d], 0usize);
    for a in &anns {
        let (m, side) = read_features(&dir, &a.clip_id).unwrap();
        ensure!(side.normalized, "{} is not normalized", a.clip_id);
        for t in 0..m.frames {
            for (k, &v) in m.row(t).iter().enumerate() {
                sum[k] += v as f64;
                sq[k] += v as f64 * v as f64;
            }
        }
        n += m.frames;
    }
    let means: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let stds: Vec<f64> = sq.iter().zip(&means).map(|(s, m)| (s / n as f64 - m * m).sqrt()).collect();
    let worst_mean = means.iter().fold(0.0f64, |a, m| a.max(m.abs()));
    let worst_std = stds.iter().fold(0.0f64, |a, s| a.max((s - 1.0).abs()));
    ensure!(worst_mean <= 1e-5, "column mean off by {worst_mean:e}");
    ensure!(worst_std <= 1e-4, "column std off by {worst_std:e}");
    Ok(format!(
        "100 lengths exact, floor exact, {n} train frames: max |mean| {worst_mean:.1e}, max |std-1| {worst_std:.1e}"
    ))
}

fn c7_gradients() -> Outcome {
    let ops = neural::op_gradchecks();
    let (name, worst) = ops.iter().fold(("", 0.0), |a, &(n, e)| if e > a.1 { (n, e) } else { a });
    ensure!(worst <= 1e-4, "op {name}: {worst:e}");
    let ((film, film_zero), (block, block_zero)) = neural::block_gradchecks();
    ensure!(film <= 1e-4, "FiLM residual layer: {film:e}");
    ensure!(block <= 1e-4, "MALiMo block: {block:e}");
    // biases in front of batch norm: exact zero gradient, up to round-off
    let zero = film_zero.max(block_zero);
    ensure!(zero <= 1e-6, "bias before batch norm has gradient {zero:e}");
    let models = neural::model_gradchecks();
    for (kind, e) in &models {
        ensure!(*e <= 1e-3, "end-to-end {kind:?}: {e:e}");
    }
    Ok(format!(
        "{} ops max {worst:.1e} ({name}), FiLM layer {film:.1e}, MALiMo block {block:.1e} (zero-gradient biases {zero:.0e}), end-to-end FiLM {:.1e} MALiMo {:.1e}",
        ops.len(),
        models[0].1,
        models[1].1
    ))
}

fn c8_identity() -> Outcome {
    let runs = neural::identity_bypass();
    for (kind, train, same) in &runs {
        ensure!(*same, "{kind:?} (train={train}) differs from the unmodulated network");
    }
    Ok(format!("{} builds bitwise equal", runs.len()))
}

fn c9_parameter_counts() -> Outcome {
    use audioqa_core::models::ModelConfig;
    let fcn = neural::count(ModelConfig::fcn());
    ensure!(fcn == neural::oracle_fcn(1), "FCN has {fcn}, closed form {}", neural::oracle_fcn(1));
    ensure!((fcn as f64 / 7.65e6 - 1.0).abs() <= 0.02, "FCN has {fcn}");
    let vocab = 150;
    let mut delta1 = 0;
    for scale in [1, 2, 4, 8] {
        let film: Vec<usize> = (1..=6).map(|k| neural::count(ModelConfig::film(2 * k, 512, vocab).with_scale(scale))).collect();
        let malimo: Vec<usize> = (1..=6).map(|k| neural::count(ModelConfig::malimo(k, vocab).with_scale(scale))).collect();
        for k in 1..=6 {
            let (f, m) = (film[k - 1], malimo[k - 1]);
            ensure!(f == neural::oracle_modulated(ModelKind::Film, 2 * k, vocab, scale), "FiLM {} at scale {scale}: {f}", 2 * k);
            ensure!(m == neural::oracle_modulated(ModelKind::Malimo, k, vocab, scale), "MALiMo {k} at scale {scale}: {m}");
        }
        let df: Vec<usize> = film.windows(2).map(|w| w[1] - w[0]).collect();
        let dm: Vec<usize> = malimo.windows(2).map(|w| w[1] - w[0]).collect();
        ensure!(df.iter().all(|&d| d == df[0]), "scale {scale}: FiLM deltas {df:?}");
        ensure!(df == dm, "scale {scale}: FiLM deltas {df:?}, MALiMo deltas {dm:?}");
        if scale == 1 {
            delta1 = df[0];
        }
    }
    ensure!((delta1 as f64 / 0.86e6 - 1.0).abs() <= 0.01, "delta {delta1}");
    Ok(format!("FCN {fcn}, per-block delta {delta1} at scale 1, equal at scales 1, 2, 4, 8"))
}

fn c10_capacity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.output = dir.path().to_path_buf();
    cfg.library.duration_scale = 0.12;
    cfg.counts.n_train = 60;
    cfg.counts.n_val = 5;
    cfg.counts.n_test = 20;
    cfg.model.scale = 4;
    cfg.model.units = 1;
    cfg.model.kind = ModelKind::Malimo;
    let run = || -> anyhow::Result<()> {
        pipeline::gen_events(&cfg)?;
        pipeline::gen_clips(&cfg)?;
        pipeline::gen_questions(&cfg)?;
        pipeline::features(&cfg)
    };
    run().map_err(|e| e.to_string())?;
    let lib = pipeline::load_library(&cfg).unwrap();
    let answers = pipeline::answer_vocab(&lib);
    let qs = pipeline::load_questions(&cfg, SplitName::Train).unwrap();
    let ids: Vec<&str> = qs.iter().map(|q| q.clip_id.as_str()).collect();
    let feats = pipeline::load_features(&cfg, SplitName::Train, &ids).unwrap();
    let need = min_frames(&cfg.model.build(100, 0));
    let qs: Vec<QuestionInstance> = qs.into_iter().filter(|q| feats[&q.clip_id].frames >= need).take(200).collect();
    ensure!(qs.len() == 200, "only {} training questions on long enough clips", qs.len());
    let vocab = Vocab::build(qs.iter().map(|q| q.text_tokens.as_slice()));
    let data = Dataset::from_questions(&qs, &feats, &vocab, &answers).map_err(|e| e.to_string())?;
    let mut model = Model::<f32>::new(cfg.model.build(vocab.len(), cfg.seed_for("init"))).unwrap();
    let tc = TrainConfig {
        hyper: Hyperparams {
            learning_rate: 1e-4,
            batch_size: 20,
            epochs: 200,
            ..Hyperparams::default()
        },
        seed: cfg.seed_for("train"),
        stop_at_train_acc: Some(0.95),
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let report = models::train(&mut model, &data, None, &tc, |_| {}).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let last = report.epochs.last().unwrap();

    // baselines fit on the same 200 questions
    let engine = pipeline::engine(&cfg, &lib).unwrap();
    let train_items = EvalItem::from_questions(&qs, &answers).unwrap();
    let test_q = pipeline::load_questions(&cfg, SplitName::Test).unwrap();
    let test_items = EvalItem::from_questions(&test_q, &answers).unwrap();
    let base = Baselines::fit(&train_items, template_supports(&engine, &answers), answers.len());
    let acc = |kind, items: &[EvalItem]| evaluate(&base.predict(kind, items, 0), items, &answers).unwrap().overall.accuracy;
    let mode_test = acc(BaselineKind::Mode, &test_items);
    // the modal training answer, lowest index on ties, counted in test by hand
    let mut freq = vec![0usize; answers.len()];
    for q in &qs {
        freq[answers.index_of(&q.answer).unwrap()] += 1;
    }
    let modal = (0..freq.len()).rev().max_by_key(|&i| freq[i]).unwrap();
    let hits = test_q.iter().filter(|q| answers.index_of(&q.answer) == Some(modal)).count();
    let expected = hits as f64 / test_q.len() as f64;
    let (mode_train, mpt_train) = (acc(BaselineKind::Mode, &train_items), acc(BaselineKind::ModePerTemplate, &train_items));
    let mpt_test = acc(BaselineKind::ModePerTemplate, &test_items);

    ensure!(last.train_acc >= 0.95, "train accuracy {:.3} after {} epochs", last.train_acc, report.epochs.len());
    ensure!(report.epochs.len() <= 200, "{} epochs", report.epochs.len());
    ensure!(secs <= 900.0, "training took {secs:.0} s");
    ensure!(mode_test == expected, "Mode scores {mode_test}, modal answer frequency {expected}");
    ensure!(mpt_train >= mode_train, "ModePerTemplate {mpt_train} < Mode {mode_train} on train");
    Ok(format!(
        "train acc {:.3} after {} epochs in {secs:.0} s; Mode test {mode_test:.4} = modal frequency; ModePerTemplate >= Mode on train ({mpt_train:.3} vs {mode_train:.3}), test {mpt_test:.3} vs {mode_test:.3}",
        last.train_acc,
        report.epochs.len()
    ))
}

fn c11_random_baseline(desk: &Desk) -> Outcome {
    let path = Layout::new(&desk.cfg.output).eval_dir().join("random.json");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).map_err(|e| e.to_string())?).unwrap();
    let acc = m["overall"]["accuracy"].as_f64().unwrap();
    let n = m["overall"]["total"].as_u64().unwrap() as f64;
    let p = 1.0 / 36.0;
    let sigma = (p * (1.0 - p) / n).sqrt();
    ensure!((acc - p).abs() <= 3.0 * sigma, "accuracy {acc:.4}, 1/36 = {p:.4}, 3 sigma = {:.4}", 3.0 * sigma);
    Ok(format!("accuracy {acc:.4} on {n} questions, |acc - 1/36| <= 3 sigma = {:.4}", 3.0 * sigma))
}

fn files_under(root: &Path, rel: &Path, out: &mut Vec<PathBuf>) {
    let dir = root.join(rel);
    if dir.is_file() {
        out.push(rel.to_path_buf());
        return;
    }
    let Ok(entries) = fs::read_dir(&dir) else {
        return;
    };
    let mut names: Vec<_> = entries.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        files_under(root, &rel.join(name), out);
    }
}

fn c12_determinism(desk: &Desk) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    desk_run(&cfg).map_err(|e| e.to_string())?;
    let (a, b) = (&desk.cfg.output, &cfg.output);
    let mut files = Vec::new();
    for part in ["events", "clips", "questions", "features", "eval", "model/checkpoint.bin"] {
        files_under(a, Path::new(part), &mut files);
    }
    for f in &files {
        let x = fs::read(a.join(f)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(f)).map_err(|e| format!("{} missing in rerun: {e}", f.display()))?;
        ensure!(x == y, "{} differs", f.display());
    }
    let mut rerun = Vec::new();
    for part in ["events", "clips", "questions", "features", "eval"] {
        files_under(b, Path::new(part), &mut rerun);
    }
    ensure!(rerun.len() + 1 == files.len(), "rerun wrote {} files, first run {}", rerun.len() + 1, files.len());
    Ok(format!("{} files byte-identical across two runs", files.len()))
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let res = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = t.elapsed().as_secs_f64();
    match &res {
        Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1} s]"),
        Err(why) => println!("FAIL {n:>2} {name}: {why} [{secs:.1} s]"),
    }
    res.is_ok()
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    let desk = match desk_run(&cfg) {
        Ok(generation) => Some(Desk {
            cfg,
            generation,
            _dir: dir,
        }),
        Err(e) => {
            println!("desk pipeline failed: {e:#}");
            None
        }
    };
    let with_desk = |f: fn(&Desk) -> Outcome| {
        let desk = desk.as_ref();
        move || desk.map_or_else(|| Err("desk pipeline failed".to_string()), f)
    };
    let results = [
        run(1, "dataset invariants", with_desk(c1_dataset_invariants)),
        run(2, "answer balance", with_desk(c2_balance)),
        run(3, "answer vocabulary", with_desk(c3_answer_vocabulary)),
        run(4, "small-world oracle equivalence", c4_small_world),
        run(5, "loudness monotone invariance", c5_monotone_invariance),
        run(6, "feature pipeline", with_desk(c6_features)),
        run(7, "gradient checks", c7_gradients),
        run(8, "modulation identity", c8_identity),
        run(9, "parameter-count structure", c9_parameter_counts),
        run(10, "learning capacity", c10_capacity),
        run(11, "random baseline", with_desk(c11_random_baseline)),
        run(12, "determinism", with_desk(c12_determinism)),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
