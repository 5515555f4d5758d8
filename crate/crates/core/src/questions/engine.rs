use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::balance::BalanceState;
use super::catalog::{Bindings, Catalog, QuestionTemplate, Skill, Slot};
use super::text::{realize_text, SynonymTable};
use super::values::{PlaceholderKind, Value};
use crate::answer::Answer;
use crate::ast::Query;
use crate::clips::{ClipAnnotation, SplitName};
use crate::error::{Error, Result};
use crate::events::EventType;
use crate::oracle;
use crate::rng::{label_seed, rng_from, Rng};

/// One emitted line of a questions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionInstance {
    pub question_id: String,
    pub clip_id: String,
    pub template_id: String,
    pub skill: Skill,
    pub text_tokens: Vec<String>,
    pub ast: Query,
    pub answer: Answer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    NoValidBinding,
    BalanceRejected,
}

/// A successful instantiation before it is assigned an id.
#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub template_id: String,
    pub skill: Skill,
    pub bindings: Bindings,
    pub answer: Answer,
    pub ast: Query,
    pub text_tokens: Vec<String>,
}

/// Valid complete bindings of one template on one clip, with answers.
pub type ValidBindings = Vec<(Vec<Value>, Answer)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Attempts {
    pub const DEFAULT: Attempts = Attempts {
        train: 5,
        val: 10,
        test: 10,
    };
    pub const LOW_RESOURCE: Attempts = Attempts {
        train: 1,
        val: 10,
        test: 10,
    };

    pub fn get(&self, split: SplitName) -> usize {
        match split {
            SplitName::Train => self.train,
            SplitName::Validation => self.val,
            SplitName::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub attempts: Attempts,
    pub draws_per_attempt: usize,
    pub synonym_prob: f64,
    pub gap_threshold: f64,
    pub warmup: usize,
    pub master_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            attempts: Attempts::DEFAULT,
            draws_per_attempt: 20,
            synonym_prob: 0.5,
            gap_threshold: 0.05,
            warmup: 50,
            master_seed: 0,
        }
    }
}

/// Catalog plus the event vocabulary it is instantiated against.
#[derive(Debug, Clone)]
pub struct QuestionEngine {
    pub catalog: Catalog,
    pub types: Vec<EventType>,
    pub synonyms: SynonymTable,
    pub synonym_prob: f64,
    type_ids: Vec<String>,
    supports: Vec<Vec<Answer>>,
}

impl QuestionEngine {
    pub fn new(catalog: Catalog, types: Vec<EventType>, synonyms: SynonymTable) -> Self {
        let type_ids: Vec<String> = types.iter().map(|t| t.id.clone()).collect();
        let supports = catalog.templates.iter().map(|t| t.support_answers(&type_ids)).collect();
        QuestionEngine {
            catalog,
            types,
            synonyms,
            synonym_prob: 0.5,
            type_ids,
            supports,
        }
    }

    pub fn support(&self, template_index: usize) -> &[Answer] {
        &self.supports[template_index]
    }

    pub fn support_of(&self, template_id: &str) -> Option<&[Answer]> {
        let k = self.catalog.templates.iter().position(|t| t.template_id == template_id)?;
        Some(&self.supports[k])
    }

    /// Every complete binding valid on `ann`, in a fixed enumeration order.
    /// Distinct type slots must bind distinct types.
    pub fn valid_bindings(&self, template: &QuestionTemplate, ann: &ClipAnnotation) -> ValidBindings {
        let slots = template.slots();
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(slots.len());
        self.enumerate(template, &slots, ann, &mut current, &mut out);
        out
    }

    fn enumerate(
        &self,
        template: &QuestionTemplate,
        slots: &[Slot],
        ann: &ClipAnnotation,
        current: &mut Vec<Value>,
        out: &mut ValidBindings,
    ) {
        let k = current.len();
        if k == slots.len() {
            let b = to_bindings(slots, current);
            if let Some(a) = template.family.answer(&template.anchors, &b, ann) {
                out.push((current.clone(), a));
            }
            return;
        }
        let domain: Vec<Value> = if slots[k].kind == PlaceholderKind::Source {
            self.type_ids
                .iter()
                .filter(|t| !current.iter().any(|v| matches!(v, Value::Type(u) if u == *t)))
                .map(|t| Value::Type(t.clone()))
                .collect()
        } else {
            slots[k].domain.clone()
        };
        for v in domain {
            current.push(v);
            self.enumerate(template, slots, ann, current, out);
            current.pop();
        }
    }

    /// Choose placeholder values one slot at a time, each uniformly among
    /// values that still have a valid completion.
    pub fn sample_binding<'a>(
        &self,
        valid: &'a ValidBindings,
        rng: &mut Rng,
    ) -> Option<&'a (Vec<Value>, Answer)> {
        let mut pool: Vec<&(Vec<Value>, Answer)> = valid.iter().collect();
        let width = pool.first()?.0.len();
        for k in 0..width {
            let mut choices: Vec<&Value> = Vec::new();
            for (vals, _) in &pool {
                if !choices.contains(&&vals[k]) {
                    choices.push(&vals[k]);
                }
            }
            let pick = choices[rng.random_range(0..choices.len())].clone();
            pool.retain(|(vals, _)| vals[k] == pick);
        }
        pool.first().copied()
    }

    /// Instantiate template `index` on `ann`, consulting and updating
    /// `balance` for the chosen answer.
    pub fn instantiate(
        &self,
        index: usize,
        valid: &ValidBindings,
        rng: &mut Rng,
        balance: &mut BalanceState,
    ) -> std::result::Result<Draft, Rejection> {
        let template = &self.catalog.templates[index];
        let (vals, answer) = self.sample_binding(valid, rng).ok_or(Rejection::NoValidBinding)?;
        if !balance.accept(&template.template_id, &self.supports[index], answer) {
            return Err(Rejection::BalanceRejected);
        }
        let bindings = to_bindings(&template.slots(), vals);
        let ast = template
            .build_ast(&bindings)
            .expect("catalog semantics were validated at load");
        let text_tokens = realize_text(template, &bindings, &self.types, &self.synonyms, self.synonym_prob, rng);
        Ok(Draft {
            template_id: template.template_id.clone(),
            skill: template.skill,
            bindings,
            answer: answer.clone(),
            ast,
            text_tokens,
        })
    }

    /// Instantiate questions for one split, clips in index order.
    pub fn generate_split(
        &self,
        split: SplitName,
        clips: &[ClipAnnotation],
        cfg: &GenerationConfig,
    ) -> Result<(Vec<QuestionInstance>, BalanceState)> {
        let mut balance = BalanceState::new(cfg.gap_threshold, cfg.warmup);
        let mut out = Vec::new();
        let n_templates = self.catalog.templates.len();
        if n_templates == 0 {
            return Err(Error::Generation("empty template catalog".into()));
        }
        for (idx, ann) in clips.iter().enumerate() {
            let mut rng = rng_from(cfg.master_seed, &[label_seed("questions"), label_seed(split.label()), idx as u64]);
            let mut cache: BTreeMap<usize, ValidBindings> = BTreeMap::new();
            let mut seen: HashSet<(usize, Vec<Value>)> = HashSet::new();
            let mut emitted = 0;
            for _ in 0..cfg.attempts.get(split) {
                for _ in 0..cfg.draws_per_attempt {
                    let t = rng.random_range(0..n_templates);
                    let valid = cache
                        .entry(t)
                        .or_insert_with(|| self.valid_bindings(&self.catalog.templates[t], ann));
                    let Ok(draft) = self.instantiate(t, valid, &mut rng, &mut balance) else {
                        continue;
                    };
                    let key = (t, draft.bindings.values().cloned().collect());
                    if !seen.insert(key) {
                        // Same question twice on one clip: undo the commit.
                        uncount(&mut balance, &draft);
                        continue;
                    }
                    let q = QuestionInstance {
                        question_id: format!("{}_q{emitted:02}", ann.clip_id),
                        clip_id: ann.clip_id.clone(),
                        template_id: draft.template_id,
                        skill: draft.skill,
                        text_tokens: draft.text_tokens,
                        ast: draft.ast,
                        answer: draft.answer,
                    };
                    cross_check(&q, ann)?;
                    out.push(q);
                    emitted += 1;
                    break;
                }
            }
        }
        Ok((out, balance))
    }
}

fn uncount(balance: &mut BalanceState, draft: &Draft) {
    if let Some(c) = balance
        .histograms
        .get_mut(&draft.template_id)
        .and_then(|h| h.get_mut(&draft.answer.token()))
    {
        *c -= 1;
    }
}

/// The generation tripwire: the family procedure and the oracle must agree.
pub fn cross_check(q: &QuestionInstance, ann: &ClipAnnotation) -> Result<()> {
    let oracle = oracle::evaluate(&q.ast, ann);
    if oracle.as_ref() != Some(&q.answer) {
        return Err(Error::OracleDisagreement {
            question_id: q.question_id.clone(),
            engine: q.answer.token(),
            oracle: oracle.map_or_else(|| "<ill-posed>".to_string(), |a| a.token()),
        });
    }
    Ok(())
}

fn to_bindings(slots: &[Slot], vals: &[Value]) -> Bindings {
    slots.iter().zip(vals).map(|(s, v)| (s.name.clone(), v.clone())).collect()
}

pub fn write_questions(path: &Path, questions: &[QuestionInstance]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for q in questions {
        let line = serde_json::to_string(q).map_err(|e| Error::json(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_questions(path: &Path) -> Result<Vec<QuestionInstance>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
        }
    }
    Ok(out)
}
