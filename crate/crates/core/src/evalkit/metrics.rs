use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalItem;
use crate::answer::AnswerVocab;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl Tally {
    fn add(&mut self, hit: bool) {
        self.total += 1;
        self.correct += hit as usize;
    }

    fn finish(&mut self) {
        self.accuracy = if self.total == 0 { 0.0 } else { self.correct as f64 / self.total as f64 };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall: Tally,
    /// Keyed by skill label; only skills present in the gold data appear.
    pub per_skill: BTreeMap<String, Tally>,
    pub per_template: BTreeMap<String, Tally>,
    /// Answer tokens in vocabulary order; rows and columns of `confusion`.
    pub labels: Vec<String>,
    /// Row = gold, column = predicted, each row normalized by its gold count.
    pub confusion: Vec<Vec<f64>>,
}

pub fn evaluate(predictions: &[usize], gold: &[EvalItem], answers: &AnswerVocab) -> Result<Metrics> {
    if predictions.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} questions",
            predictions.len(),
            gold.len()
        )));
    }
    let k = answers.len();
    let mut overall = Tally::default();
    let mut per_skill: BTreeMap<String, Tally> = BTreeMap::new();
    let mut per_template: BTreeMap<String, Tally> = BTreeMap::new();
    let mut counts = vec![vec![0usize; k]; k];
    for (&p, it) in predictions.iter().zip(gold) {
        if p >= k || it.label >= k {
            return Err(Error::InvalidArgument(format!("{}: answer index out of range", it.question_id)));
        }
        let hit = p == it.label;
        overall.add(hit);
        per_skill.entry(it.skill.label().to_string()).or_default().add(hit);
        per_template.entry(it.template_id.clone()).or_default().add(hit);
        counts[it.label][p] += 1;
    }
    overall.finish();
    per_skill.values_mut().chain(per_template.values_mut()).for_each(Tally::finish);
    let confusion = counts
        .iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            row.iter().map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect()
        })
        .collect();
    Ok(Metrics {
        overall,
        per_skill,
        per_template,
        labels: answers.answers().iter().map(|a| a.token()).collect(),
        confusion,
    })
}

impl Metrics {
    /// Tab-separated per-template accuracy table with a header row.
    pub fn per_template_tsv(&self) -> String {
        let mut s = String::from("template_id\tcorrect\ttotal\taccuracy\n");
        for (t, v) in &self.per_template {
            let _ = writeln!(s, "{t}\t{}\t{}\t{:.6}", v.correct, v.total, v.accuracy);
        }
        s
    }

    /// Writes `{stem}.json` and `{stem}.tsv` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&json, e))?;
        std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
        let tsv = dir.join(format!("{stem}.tsv"));
        std::fs::write(&tsv, self.per_template_tsv()).map_err(|e| Error::io(&tsv, e))
    }
}
