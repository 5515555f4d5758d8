use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use audioqa_core::audio::read_wav_mono16;
use audioqa_core::clips::{generate_split, read_annotations, write_annotations, ClipAnnotation, SplitName};
use audioqa_core::evalkit::{evaluate, template_supports, BaselineKind, Baselines, EvalItem, FeatureKind, LogisticModel, Metrics};
use audioqa_core::events::{EventLibrary, Taxonomy};
use audioqa_core::features::{mfsc_with, read_features, write_features, FeatureMatrix, NormStats};
use audioqa_core::models::{self, min_frames, Dataset, Model, ModelConfig, Vocab};
use audioqa_core::questions::{read_questions, write_questions, Catalog, QuestionEngine, QuestionInstance, SynonymTable};
use audioqa_core::AnswerVocab;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Failure;

/// Where each stage keeps its files.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn library(&self) -> PathBuf {
        self.root.join("events/library.json")
    }

    pub fn annotations(&self, split: SplitName) -> PathBuf {
        self.root.join(format!("clips/{split}.jsonl"))
    }

    pub fn audio_dir(&self, split: SplitName) -> PathBuf {
        self.root.join(format!("clips/{split}"))
    }

    pub fn questions(&self, split: SplitName) -> PathBuf {
        self.root.join(format!("questions/{split}.jsonl"))
    }

    pub fn features_dir(&self, split: SplitName) -> PathBuf {
        self.root.join(format!("features/{split}"))
    }

    pub fn norm(&self) -> PathBuf {
        self.root.join("features/norm.json")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("model/checkpoint.bin")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn stats_dir(&self) -> PathBuf {
        self.root.join("stats")
    }

    pub fn saliency_dir(&self) -> PathBuf {
        self.root.join("saliency")
    }
}

fn require(path: &Path, stage: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::MissingStage {
            stage,
            path: path.to_path_buf(),
        }
        .into())
    }
}

fn mkdirs(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        mkdirs(dir)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_library(cfg: &RunConfig) -> Result<EventLibrary> {
    let layout = Layout::new(&cfg.output);
    require(&layout.library(), "gen-events")?;
    Ok(EventLibrary::load(&layout.library())?)
}

pub fn load_annotations(cfg: &RunConfig, split: SplitName) -> Result<Vec<ClipAnnotation>> {
    let path = Layout::new(&cfg.output).annotations(split);
    require(&path, "gen-clips")?;
    Ok(read_annotations(&path)?)
}

pub fn load_questions(cfg: &RunConfig, split: SplitName) -> Result<Vec<QuestionInstance>> {
    let path = Layout::new(&cfg.output).questions(split);
    require(&path, "gen-questions")?;
    Ok(read_questions(&path)?)
}

pub fn answer_vocab(lib: &EventLibrary) -> AnswerVocab {
    AnswerVocab::new(&lib.type_ids())
}

pub fn engine(cfg: &RunConfig, lib: &EventLibrary) -> Result<QuestionEngine> {
    let catalog = match &cfg.catalog {
        Some(p) => Catalog::load(p)?,
        None => Catalog::builtin(),
    };
    catalog.validate()?;
    let synonyms = match &cfg.synonyms {
        Some(p) => SynonymTable::load(p)?,
        None => SynonymTable::builtin(),
    };
    let mut e = QuestionEngine::new(catalog, lib.types.clone(), synonyms);
    e.synonym_prob = cfg.questions.synonym_prob;
    Ok(e)
}

pub fn gen_events(cfg: &RunConfig) -> Result<EventLibrary> {
    let taxonomy = match &cfg.taxonomy {
        Some(p) => Taxonomy::load(p)?,
        None => Taxonomy::builtin(),
    };
    let lib = match &cfg.manifest {
        Some(m) => EventLibrary::load_manifest(m, &taxonomy)?,
        None => EventLibrary::synthetic(
            &taxonomy.with_duration_scale(cfg.library.duration_scale),
            cfg.library.instances_per_type,
            cfg.library.sample_rate,
            cfg.seed_for("events"),
        )?,
    };
    let path = Layout::new(&cfg.output).library();
    mkdirs(path.parent().expect("has parent"))?;
    lib.save(&path)?;
    Ok(lib)
}

pub fn gen_clips(cfg: &RunConfig) -> Result<()> {
    let lib = load_library(cfg)?;
    let layout = Layout::new(&cfg.output);
    let splits = generate_split(&cfg.split_config(), &lib)?;
    for s in splits.iter() {
        let path = layout.annotations(s.name);
        mkdirs(path.parent().expect("has parent"))?;
        write_annotations(&path, &s.annotations())?;
        s.render_to_dir(&lib, cfg.clip.snr_db, &layout.audio_dir(s.name))?;
    }
    Ok(())
}

pub fn gen_questions(cfg: &RunConfig) -> Result<BTreeMap<SplitName, usize>> {
    let lib = load_library(cfg)?;
    let engine = engine(cfg, &lib)?;
    let layout = Layout::new(&cfg.output);
    let gen = cfg.generation();
    let mut counts = BTreeMap::new();
    for split in SplitName::ALL {
        let clips = load_annotations(cfg, split)?;
        let (qs, _) = engine.generate_split(split, &clips, &gen)?;
        let path = layout.questions(split);
        mkdirs(path.parent().expect("has parent"))?;
        write_questions(&path, &qs)?;
        counts.insert(split, qs.len());
    }
    Ok(counts)
}

/// Extract log-mel features for every clip, fit the normalizer on the
/// training split and write normalized matrices.
pub fn features(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(&cfg.output);
    let mut raw: Vec<(SplitName, Vec<(String, FeatureMatrix)>)> = Vec::new();
    for split in SplitName::ALL {
        let clips = load_annotations(cfg, split)?;
        let dir = layout.audio_dir(split);
        let mats = clips
            .par_iter()
            .map(|c| {
                let wav = dir.join(format!("{}.wav", c.clip_id));
                require(&wav, "gen-clips")?;
                let (samples, sr) = read_wav_mono16(&wav)?;
                Ok((c.clip_id.clone(), mfsc_with(&samples, sr, &cfg.features)?))
            })
            .collect::<Result<Vec<_>>>()?;
        raw.push((split, mats));
    }
    let norm = NormStats::fit(raw[0].1.iter().map(|(_, m)| m))?;
    write_json(&layout.norm(), &norm)?;
    for (split, mats) in &raw {
        let dir = layout.features_dir(*split);
        mkdirs(&dir)?;
        mats.par_iter().try_for_each(|(id, m)| -> Result<()> {
            write_features(&dir, id, &norm.apply(m)?, true)?;
            Ok(())
        })?;
    }
    Ok(())
}

pub fn load_features(cfg: &RunConfig, split: SplitName, clip_ids: &[&str]) -> Result<HashMap<String, FeatureMatrix>> {
    let dir = Layout::new(&cfg.output).features_dir(split);
    require(&dir, "features")?;
    clip_ids
        .par_iter()
        .map(|id| Ok((id.to_string(), read_features(&dir, id)?.0)))
        .collect()
}

fn dataset(cfg: &RunConfig, split: SplitName, qs: &[QuestionInstance], vocab: &Vocab, answers: &AnswerVocab) -> Result<Dataset> {
    let mut ids: Vec<&str> = qs.iter().map(|q| q.clip_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let feats = load_features(cfg, split, &ids)?;
    Ok(Dataset::from_questions(qs, &feats, vocab, answers)?)
}

fn check_lengths(data: &Dataset, mc: &ModelConfig) -> Result<()> {
    let need = min_frames(mc);
    if let Some((id, f)) = data.clip_ids.iter().zip(&data.clips).find(|(_, f)| f.frames < need) {
        return Err(Failure::Usage(format!(
            "clip {id} has {} frames but the {:?} model needs at least {need}; use longer clips or a different model",
            f.frames, mc.kind
        ))
        .into());
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub parameters: usize,
    pub report: models::TrainReport,
}

pub fn train(cfg: &RunConfig, mut progress: impl FnMut(&models::EpochLog)) -> Result<TrainSummary> {
    let lib = load_library(cfg)?;
    let answers = answer_vocab(&lib);
    let layout = Layout::new(&cfg.output);
    let train_q = load_questions(cfg, SplitName::Train)?;
    let val_q = load_questions(cfg, SplitName::Validation)?;
    let vocab = Vocab::build(train_q.iter().map(|q| q.text_tokens.as_slice()));
    let train_set = dataset(cfg, SplitName::Train, &train_q, &vocab, &answers)?;
    let val_set = dataset(cfg, SplitName::Validation, &val_q, &vocab, &answers)?;
    let mc = cfg.model.build(vocab.len(), cfg.seed_for("init"));
    check_lengths(&train_set, &mc)?;
    check_lengths(&val_set, &mc)?;
    let mut model = Model::<f32>::new(mc.clone())?;

    let dir = layout.model_dir();
    mkdirs(&dir)?;
    write_json(&dir.join("config.json"), &mc)?;
    vocab.save(&dir.join("vocab.json"))?;
    let log_path = dir.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let mut write_err = None;
    let report = models::train(&mut model, &train_set, Some(&val_set), &cfg.train_config(), |e| {
        progress(e);
        let line = serde_json::to_string(e).expect("epoch log serializes");
        if let Err(err) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            write_err.get_or_insert(err);
        }
    })?;
    if let Some(err) = write_err {
        return Err(err).with_context(|| format!("writing {}", log_path.display()));
    }
    model.store.save(&layout.checkpoint())?;
    let summary = TrainSummary {
        parameters: model.num_params(),
        report,
    };
    write_json(&dir.join("report.json"), &summary)?;
    Ok(summary)
}

/// Rebuild the trained model and its question vocabulary.
pub fn load_model(cfg: &RunConfig) -> Result<(Model<f32>, Vocab)> {
    let layout = Layout::new(&cfg.output);
    require(&layout.checkpoint(), "train")?;
    let dir = layout.model_dir();
    let mc: ModelConfig = read_json(&dir.join("config.json"))?;
    let vocab = Vocab::load(&dir.join("vocab.json"))?;
    let mut model = Model::<f32>::new(mc)?;
    model.store.load_into(&layout.checkpoint())?;
    Ok((model, vocab))
}

/// Overall and per-skill accuracy of every evaluated system.
pub type EvalSummary = BTreeMap<String, Metrics>;

/// Scores the baselines, the question-only logistic models and, when a
/// checkpoint exists, the trained model on the test split.
pub fn eval(cfg: &RunConfig) -> Result<EvalSummary> {
    let lib = load_library(cfg)?;
    let answers = answer_vocab(&lib);
    let engine = engine(cfg, &lib)?;
    let layout = Layout::new(&cfg.output);
    let train_q = load_questions(cfg, SplitName::Train)?;
    let test_q = load_questions(cfg, SplitName::Test)?;
    let train_items = EvalItem::from_questions(&train_q, &answers)?;
    let test_items = EvalItem::from_questions(&test_q, &answers)?;

    let mut systems: Vec<(String, Vec<usize>)> = Vec::new();
    let base = Baselines::fit(&train_items, template_supports(&engine, &answers), answers.len());
    for kind in BaselineKind::ALL {
        systems.push((kind.label().into(), base.predict(kind, &test_items, cfg.seed_for("baselines"))));
    }
    for (name, kind) in [("question_template", FeatureKind::TemplateOneHot), ("bag_of_words", FeatureKind::BagOfWords)] {
        let (m, fit) = LogisticModel::train(kind, &train_items, answers.len(), &cfg.eval.logistic, cfg.eval.tolerance, cfg.seed_for(name))?;
        write_json(&layout.eval_dir().join(format!("{name}_fit.json")), &fit)?;
        systems.push((name.into(), m.predict(&test_items)));
    }
    if layout.checkpoint().exists() {
        let (mut model, vocab) = load_model(cfg)?;
        let data = dataset(cfg, SplitName::Test, &test_q, &vocab, &answers)?;
        check_lengths(&data, &model.config)?;
        let name = format!("{:?}", model.config.kind).to_lowercase();
        systems.push((name, models::predict(&mut model, &data, cfg.eval.batch_size)?));
    }

    let mut summary = EvalSummary::new();
    for (name, pred) in systems {
        let m = evaluate(&pred, &test_items, &answers)?;
        m.write(&layout.eval_dir(), &name)?;
        summary.insert(name, m);
    }
    let brief: BTreeMap<&String, BTreeMap<String, f64>> = summary
        .iter()
        .map(|(n, m)| {
            let mut row: BTreeMap<String, f64> = m.per_skill.iter().map(|(s, t)| (s.clone(), t.accuracy)).collect();
            row.insert("overall".into(), m.overall.accuracy);
            (n, row)
        })
        .collect();
    write_json(&layout.eval_dir().join("summary.json"), &brief)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaliencyRecord {
    pub question_id: String,
    pub clip_id: String,
    #[serde(rename = "T")]
    pub frames: usize,
    pub dims: usize,
    pub predicted: String,
    pub answer: String,
}

/// Saliency maps for the named test questions, or the first `limit` test
/// questions when none are named.
pub fn saliency(cfg: &RunConfig, question_ids: &[String], limit: usize) -> Result<Vec<SaliencyRecord>> {
    let lib = load_library(cfg)?;
    let answers = answer_vocab(&lib);
    let (mut model, vocab) = load_model(cfg)?;
    let test_q = load_questions(cfg, SplitName::Test)?;
    let chosen: Vec<QuestionInstance> = if question_ids.is_empty() {
        test_q.into_iter().take(limit).collect()
    } else {
        let by_id: HashMap<&str, &QuestionInstance> = test_q.iter().map(|q| (q.question_id.as_str(), q)).collect();
        question_ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|q| (*q).clone())
                    .ok_or_else(|| Failure::Usage(format!("no test question {id:?}")).into())
            })
            .collect::<Result<_>>()?
    };
    let data = dataset(cfg, SplitName::Test, &chosen, &vocab, &answers)?;
    let dir = Layout::new(&cfg.output).saliency_dir();
    mkdirs(&dir)?;
    let mut out = Vec::new();
    for (i, q) in chosen.iter().enumerate() {
        let map = models::saliency(&mut model, &data, i)?;
        let bytes: Vec<u8> = map.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let raw = dir.join(format!("{}.f32", q.question_id));
        fs::write(&raw, bytes).with_context(|| format!("writing {}", raw.display()))?;
        let rec = SaliencyRecord {
            question_id: q.question_id.clone(),
            clip_id: q.clip_id.clone(),
            frames: map.frames,
            dims: map.dims,
            predicted: answers.get(map.predicted).map_or_else(String::new, |a| a.token()),
            answer: q.answer.token(),
        };
        write_json(&dir.join(format!("{}.json", q.question_id)), &rec)?;
        out.push(rec);
    }
    Ok(out)
}
