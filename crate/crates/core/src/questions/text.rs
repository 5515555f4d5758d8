use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;

use super::catalog::{phrasing_placeholders, Bindings, QuestionTemplate};
use crate::error::{Error, Result};
use crate::events::EventType;
use crate::rng::Rng;

const BUILTIN_SYNONYMS: &str = include_str!("../../data/synonyms.json");

/// Word → replacement list. Replacements may span several words.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymTable {
    pub words: BTreeMap<String, Vec<String>>,
}

impl SynonymTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_SYNONYMS).expect("builtin synonyms are valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let words: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("synonym table: {e}")))?;
        if let Some((w, _)) = words.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::Schema(format!("synonym table: {w:?} has no replacements")));
        }
        Ok(SynonymTable { words })
    }
}

/// Lowercase, split on whitespace and strip `?`, `.` and `,`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c| c == '?' || c == '.' || c == ',').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Substitute bindings into a phrasing without tokenizing.
pub fn fill_phrasing(phrasing: &str, template: &QuestionTemplate, bindings: &Bindings, types: &[EventType]) -> String {
    let mut text = phrasing.to_string();
    for name in phrasing_placeholders(phrasing) {
        let Some(p) = template.placeholders.iter().find(|p| p.name == name) else {
            continue;
        };
        // Actions read the type bound to their paired source.
        let key = match p.kind {
            super::PlaceholderKind::Action => format!("S{}", &name[1..]),
            _ => name.clone(),
        };
        if let Some(v) = bindings.get(&key) {
            text = text.replace(&format!("<{name}>"), &v.word(p.kind, types));
        }
    }
    text
}

/// Pick one phrasing uniformly, fill it, tokenize, then replace each word
/// that has synonyms with probability `synonym_prob`.
pub fn realize_text(
    template: &QuestionTemplate,
    bindings: &Bindings,
    types: &[EventType],
    synonyms: &SynonymTable,
    synonym_prob: f64,
    rng: &mut Rng,
) -> Vec<String> {
    let phrasing = &template.phrasings[rng.random_range(0..template.phrasings.len())];
    let filled = fill_phrasing(phrasing, template, bindings, types);
    let mut out = Vec::new();
    for tok in tokenize(&filled) {
        match synonyms.words.get(&tok) {
            Some(alts) if rng.random::<f64>() < synonym_prob => {
                let alt = &alts[rng.random_range(0..alts.len())];
                out.extend(tokenize(alt));
            }
            _ => out.push(tok),
        }
    }
    out
}
