use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::net::Batch;
use super::vocab::Vocab;
use crate::answer::AnswerVocab;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nn::{Real, Tensor};
use crate::questions::QuestionInstance;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub question_id: String,
    pub template_id: String,
    /// Index into `Dataset::clips`.
    pub clip: usize,
    pub tokens: Vec<usize>,
    pub label: usize,
}

/// Normalized clip features plus encoded questions that refer to them.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub clip_ids: Vec<String>,
    pub clips: Vec<FeatureMatrix>,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn from_questions(
        questions: &[QuestionInstance],
        features: &HashMap<String, FeatureMatrix>,
        vocab: &Vocab,
        answers: &AnswerVocab,
    ) -> Result<Self> {
        let mut d = Dataset::default();
        let mut slot: HashMap<&str, usize> = HashMap::new();
        for q in questions {
            let clip = match slot.get(q.clip_id.as_str()) {
                Some(&i) => i,
                None => {
                    let f = features.get(&q.clip_id).ok_or_else(|| {
                        Error::Schema(format!("no features for clip {} (question {})", q.clip_id, q.question_id))
                    })?;
                    d.clip_ids.push(q.clip_id.clone());
                    d.clips.push(f.clone());
                    slot.insert(&q.clip_id, d.clips.len() - 1);
                    d.clips.len() - 1
                }
            };
            let label = answers
                .index_of(&q.answer)
                .ok_or_else(|| Error::Schema(format!("{}: answer {} not in vocabulary", q.question_id, q.answer)))?;
            d.examples.push(Example {
                question_id: q.question_id.clone(),
                template_id: q.template_id.clone(),
                clip,
                tokens: vocab.encode(&q.text_tokens),
                label,
            });
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn frames(&self, example: usize) -> usize {
        self.clips[self.examples[example].clip].frames
    }

    /// Pads the selected examples to a common width and token length.
    pub fn batch<T: Real>(&self, idx: &[usize]) -> Batch<T> {
        let n = idx.len();
        let mels = idx.first().map_or(0, |&i| self.clips[self.examples[i].clip].dims);
        let width = idx.iter().map(|&i| self.frames(i)).max().unwrap_or(0);
        let max_tokens = idx.iter().map(|&i| self.examples[i].tokens.len()).max().unwrap_or(0).max(1);
        let mut audio = Tensor::zeros(&[n, 1, mels, width]);
        let mut tokens = vec![0; n * max_tokens];
        for (b, &i) in idx.iter().enumerate() {
            let ex = &self.examples[i];
            let f = &self.clips[ex.clip];
            for t in 0..f.frames {
                for (m, &v) in f.row(t).iter().enumerate() {
                    audio.data[(b * mels + m) * width + t] = T::of(v as f64);
                }
            }
            tokens[b * max_tokens..b * max_tokens + ex.tokens.len()].copy_from_slice(&ex.tokens);
        }
        Batch {
            audio,
            frames: idx.iter().map(|&i| self.frames(i)).collect(),
            token_lens: idx.iter().map(|&i| self.examples[i].tokens.len()).collect(),
            tokens,
            max_tokens,
            labels: idx.iter().map(|&i| self.examples[i].label).collect(),
        }
    }

    /// Length-bucketed batches: examples are grouped into `bin_frames`-wide
    /// length bins (shuffled within each bin when `rng` is given), cut into
    /// `batch_size` chunks and the chunk order shuffled. A trailing
    /// single-example chunk is merged into its predecessor so batch-norm
    /// always sees at least two items.
    pub fn batches(&self, batch_size: usize, bin_frames: usize, mut rng: Option<&mut Rng>) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        if let Some(r) = rng.as_deref_mut() {
            order.shuffle(r);
        }
        order.sort_by_key(|&i| self.frames(i) / bin_frames.max(1));
        let mut out: Vec<Vec<usize>> = order.chunks(batch_size.max(2)).map(<[usize]>::to_vec).collect();
        if out.len() >= 2 && out.last().is_some_and(|b| b.len() == 1) {
            let last = out.pop().expect("non-empty");
            out.last_mut().expect("non-empty").extend(last);
        }
        if let Some(r) = rng {
            out.shuffle(r);
        }
        out
    }
}
