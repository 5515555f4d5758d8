//! The closed answer vocabulary.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest integer answer a question may have.
pub const MAX_COUNT: u8 = 12;

/// Number of answers: yes, no, 20 event types, nothing and 0..=12.
pub const VOCAB_SIZE: usize = 36;

/// A single answer. Event answers carry the event-type id (e.g. `"d000"`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Answer {
    Yes,
    No,
    Event(String),
    Nothing,
    Count(u8),
}

impl Answer {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn token(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Yes => f.write_str("yes"),
            Answer::No => f.write_str("no"),
            Answer::Event(id) => f.write_str(id),
            Answer::Nothing => f.write_str("nothing"),
            Answer::Count(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Answer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "yes" => Answer::Yes,
            "no" => Answer::No,
            "nothing" => Answer::Nothing,
            _ if s.bytes().all(|b| b.is_ascii_digit()) && !s.is_empty() => {
                let n: u8 = s
                    .parse()
                    .map_err(|_| Error::Schema(format!("bad count answer {s:?}")))?;
                if n > MAX_COUNT {
                    return Err(Error::Schema(format!("count answer {n} exceeds {MAX_COUNT}")));
                }
                Answer::Count(n)
            }
            _ if !s.is_empty() => Answer::Event(s.to_string()),
            _ => return Err(Error::Schema("empty answer".into())),
        })
    }
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Fixed-order answer vocabulary.
///
/// Index order: `yes`, `no`, the event types in taxonomy order, `nothing`,
/// then the integers `0..=12`.
#[derive(Debug, Clone)]
pub struct AnswerVocab {
    answers: Vec<Answer>,
    index: HashMap<Answer, usize>,
}

impl AnswerVocab {
    pub fn new<S: AsRef<str>>(type_ids: &[S]) -> Self {
        let mut answers = vec![Answer::Yes, Answer::No];
        answers.extend(type_ids.iter().map(|t| Answer::Event(t.as_ref().to_string())));
        answers.push(Answer::Nothing);
        answers.extend((0..=MAX_COUNT).map(Answer::Count));
        let index = answers
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        AnswerVocab { answers, index }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn index_of(&self, answer: &Answer) -> Option<usize> {
        self.index.get(answer).copied()
    }

    pub fn contains(&self, answer: &Answer) -> bool {
        self.index.contains_key(answer)
    }

    pub fn get(&self, i: usize) -> Option<&Answer> {
        self.answers.get(i)
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }
}
