//! Non-neural baselines, question-only logistic models and the metric suite.

mod baselines;
mod logistic;
mod metrics;

pub use baselines::{BaselineKind, Baselines};
pub use logistic::{Encoder, FeatureKind, LogisticFit, LogisticModel};
pub use metrics::{evaluate, Metrics, Tally};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::answer::AnswerVocab;
use crate::error::{Error, Result};
use crate::questions::{QuestionEngine, QuestionInstance, Skill};

/// What the baselines and metrics need to know about one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub question_id: String,
    pub template_id: String,
    pub skill: Skill,
    pub tokens: Vec<String>,
    /// Gold answer index in the answer vocabulary.
    pub label: usize,
}

impl EvalItem {
    pub fn from_question(q: &QuestionInstance, answers: &AnswerVocab) -> Result<Self> {
        let label = answers
            .index_of(&q.answer)
            .ok_or_else(|| Error::Schema(format!("{}: answer {} outside the vocabulary", q.question_id, q.answer)))?;
        Ok(EvalItem {
            question_id: q.question_id.clone(),
            template_id: q.template_id.clone(),
            skill: q.skill,
            tokens: q.text_tokens.clone(),
            label,
        })
    }

    pub fn from_questions(qs: &[QuestionInstance], answers: &AnswerVocab) -> Result<Vec<Self>> {
        qs.iter().map(|q| EvalItem::from_question(q, answers)).collect()
    }
}

/// Each template's reachable answers as vocabulary indices.
pub fn template_supports(engine: &QuestionEngine, answers: &AnswerVocab) -> BTreeMap<String, Vec<usize>> {
    engine
        .catalog
        .templates
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let idx = engine.support(k).iter().filter_map(|a| answers.index_of(a)).collect();
            (t.template_id.clone(), idx)
        })
        .collect()
}
