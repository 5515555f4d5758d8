use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Question word index built from training questions only; index 0 pads,
/// index 1 stands for unseen words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn build<'a, I, S>(questions: I) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let words: BTreeSet<&str> = questions.into_iter().flat_map(|q| q.iter().map(|w| w.as_ref())).collect();
        let tokens = ["<pad>", "<unk>"]
            .into_iter()
            .chain(words)
            .map(String::from)
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words
            .iter()
            .map(|w| self.index.get(w.as_ref()).copied().unwrap_or(UNK))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.tokens).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Ok(Self::from_tokens(tokens))
    }
}
