use std::collections::{BTreeMap, HashMap, HashSet};

use anyhow::Result;
use audioqa_core::clips::{scan_annotation, scan_splits, ClipAnnotation, SplitName};
use audioqa_core::oracle::verify_dataset;
use audioqa_core::questions::{BalanceState, QuestionInstance};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::pipeline::{answer_vocab, engine, load_annotations, load_library, load_questions, write_json, Layout};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub clips: BTreeMap<String, usize>,
    pub questions: BTreeMap<String, usize>,
    /// Largest within-template answer spread among templates past warm-up.
    pub max_balance_gap: f64,
    pub violations: Vec<String>,
}

impl VerifyOutcome {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs every dataset scanner over the files of a run and writes
/// `verify.json` next to them.
pub fn verify(cfg: &RunConfig) -> Result<VerifyOutcome> {
    let lib = load_library(cfg)?;
    let engine = engine(cfg, &lib)?;
    let answers = answer_vocab(&lib);
    let layout = Layout::new(&cfg.output);
    let gen = cfg.generation();
    let mut out = VerifyOutcome::default();
    let mut bad = |m: String| out.violations.push(m);

    let expected = 16 + lib.types.len();
    if answers.len() != expected {
        bad(format!("answer vocabulary has {} entries, expected {expected}", answers.len()));
    }

    let mut anns: BTreeMap<SplitName, Vec<ClipAnnotation>> = BTreeMap::new();
    for split in SplitName::ALL {
        let clips = load_annotations(cfg, split)?;
        if clips.len() != cfg.split_config().count(split) {
            bad(format!("{split}: {} clips, config asks for {}", clips.len(), cfg.split_config().count(split)));
        }
        for c in &clips {
            for v in scan_annotation(c, &lib.types, &cfg.clip) {
                bad(format!("{split}: {v}"));
            }
            if !layout.audio_dir(split).join(format!("{}.wav", c.clip_id)).exists() {
                bad(format!("{split}: {}: waveform missing", c.clip_id));
            }
        }
        anns.insert(split, clips);
    }
    let train = &anns[&SplitName::Train];
    let others = [("val", anns[&SplitName::Validation].as_slice()), ("test", anns[&SplitName::Test].as_slice())];
    for v in scan_splits(train, &others) {
        bad(v.to_string());
    }

    let mut ids = HashSet::new();
    for split in SplitName::ALL {
        let qs = load_questions(cfg, split)?;
        let report = verify_dataset(&qs, &anns[&split]);
        for m in &report.mismatches {
            bad(format!("{split}: {}: oracle disagreement {:?}", m.question_id, m.kind));
        }
        for q in &qs {
            if !ids.insert(q.question_id.clone()) {
                bad(format!("{split}: duplicate question id {}", q.question_id));
            }
            if !answers.contains(&q.answer) {
                bad(format!("{split}: {}: answer {} outside the vocabulary", q.question_id, q.answer));
            }
            if engine.support_of(&q.template_id).is_none_or(|s| !s.contains(&q.answer)) {
                bad(format!("{split}: {}: answer {} not reachable by {}", q.question_id, q.answer, q.template_id));
            }
        }
        for m in per_clip_checks(&qs, gen.attempts.get(split)) {
            bad(format!("{split}: {m}"));
        }

        let mut bal = BalanceState::new(gen.gap_threshold, gen.warmup);
        for q in &qs {
            *bal.histograms
                .entry(q.template_id.clone())
                .or_default()
                .entry(q.answer.token())
                .or_default() += 1;
        }
        for t in &engine.catalog.templates {
            if bal.total(&t.template_id) < gen.warmup {
                continue;
            }
            let support = engine.support_of(&t.template_id).unwrap_or_default();
            let gap = bal.gap(&t.template_id, support).unwrap_or(0.0);
            out.max_balance_gap = out.max_balance_gap.max(gap);
            if gap > gen.gap_threshold + 1e-12 {
                bad(format!("{split}: template {} answer spread {gap:.4} exceeds {}", t.template_id, gen.gap_threshold));
            }
        }
        out.clips.insert(split.to_string(), anns[&split].len());
        out.questions.insert(split.to_string(), qs.len());
    }
    write_json(&cfg.output.join("verify.json"), &out)?;
    Ok(out)
}

/// At most `attempts` questions per clip and no question asked twice about
/// the same clip.
fn per_clip_checks(qs: &[QuestionInstance], attempts: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut per: HashMap<&str, Vec<&QuestionInstance>> = HashMap::new();
    for q in qs {
        per.entry(&q.clip_id).or_default().push(q);
    }
    let mut clips: Vec<_> = per.into_iter().collect();
    clips.sort_by_key(|(c, _)| *c);
    for (clip, list) in clips {
        if list.len() > attempts {
            out.push(format!("{clip}: {} questions, at most {attempts} allowed", list.len()));
        }
        let mut seen = HashSet::new();
        for q in list {
            let key = serde_json::to_string(&q.ast).expect("ast serializes");
            if !seen.insert(key) {
                out.push(format!("{clip}: {} repeats an earlier question", q.question_id));
            }
        }
    }
    out
}
