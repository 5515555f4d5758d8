//! Reference semantics for [`Query`] trees over clip annotations.
//!
//! This is the generic evaluator; the question engine computes answers with
//! per-family procedures and every emitted question is checked against it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::answer::{Answer, MAX_COUNT};
use crate::ast::{Attr, AttrRel, Direction, Extreme, IntRel, Ordinal, Query, Selector, SetSelector};
use crate::clips::{ClipAnnotation, EventOccurrence};
use crate::questions::QuestionInstance;

/// Relative tolerance under which two attribute values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Largest clip the bitset evaluator handles.
pub const MAX_EVENTS: usize = 64;

/// Outcome of resolving a singular reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolved {
    /// Index into `annotation.events`.
    Event(usize),
    /// Well-formed reference with no referent, e.g. the sound after the last.
    Nothing,
    /// Ill-posed reference (ambiguous, out of range or tied).
    Invalid,
}

pub fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

pub fn attr_value(ev: &EventOccurrence, attr: Attr) -> f64 {
    match attr {
        Attr::Duration => ev.duration(),
        Attr::Loudness => ev.loudness,
    }
}

pub fn resolve_selector(sel: &Selector, ann: &ClipAnnotation) -> Resolved {
    let n = ann.events.len();
    match sel {
        Selector::ByType(t) => {
            let mut hits = ann.events.iter().enumerate().filter(|(_, e)| &e.type_id == t);
            match (hits.next(), hits.next()) {
                (Some((i, _)), None) => Resolved::Event(i),
                _ => Resolved::Invalid,
            }
        }
        Selector::ByOrdinal(Ordinal::Nth(k)) => {
            if *k >= 1 && *k <= n {
                Resolved::Event(k - 1)
            } else {
                Resolved::Invalid
            }
        }
        Selector::ByOrdinal(Ordinal::Last) => {
            if n > 0 {
                Resolved::Event(n - 1)
            } else {
                Resolved::Invalid
            }
        }
        Selector::Relative {
            anchor,
            dir,
            immediate,
        } => {
            // "the sound before X" without "immediately" names a set, not an event.
            if !immediate {
                return Resolved::Invalid;
            }
            match resolve_selector(anchor, ann) {
                Resolved::Event(i) => neighbor(i, n, *dir),
                _ => Resolved::Invalid,
            }
        }
        Selector::Superlative { attr, ext } => {
            if n == 0 {
                return Resolved::Invalid;
            }
            let vals: Vec<f64> = ann.events.iter().map(|e| attr_value(e, *attr)).collect();
            let mut best = 0;
            for (i, &v) in vals.iter().enumerate() {
                let better = match ext {
                    Extreme::Max => v > vals[best],
                    Extreme::Min => v < vals[best],
                };
                if better {
                    best = i;
                }
            }
            if vals.iter().enumerate().any(|(i, &v)| i != best && ties(v, vals[best])) {
                Resolved::Invalid
            } else {
                Resolved::Event(best)
            }
        }
    }
}

fn neighbor(i: usize, n: usize, dir: Direction) -> Resolved {
    match dir {
        Direction::Before if i > 0 => Resolved::Event(i - 1),
        Direction::After if i + 1 < n => Resolved::Event(i + 1),
        _ => Resolved::Nothing,
    }
}

/// Resolve a set reference to a bitmask over event indices; `None` when
/// ill-posed.
pub fn resolve_set(set: &SetSelector, ann: &ClipAnnotation) -> Option<u64> {
    let n = ann.events.len();
    if n > MAX_EVENTS {
        return None;
    }
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mask_where = |pred: &dyn Fn(usize) -> bool| (0..n).filter(|&i| pred(i)).fold(0u64, |m, i| m | 1 << i);
    match set {
        SetSelector::AllEvents => Some(all),
        SetSelector::AllOfType(t) => Some(mask_where(&|i| &ann.events[i].type_id == t)),
        SetSelector::AllSide { anchor, dir } => match resolve_selector(anchor, ann) {
            Resolved::Event(i) => Some(match dir {
                Direction::Before => mask_where(&|j| j < i),
                Direction::After => mask_where(&|j| j > i),
            }),
            _ => None,
        },
        SetSelector::Adjacent { anchor, dir } => match resolve_selector(anchor, ann) {
            Resolved::Event(i) => Some(match neighbor(i, n, *dir) {
                Resolved::Event(j) => 1 << j,
                _ => 0,
            }),
            _ => None,
        },
        SetSelector::AttrFiltered { attr, cmp, anchor } => {
            if cmp.attr() != *attr {
                return None;
            }
            let Resolved::Event(i) = resolve_selector(anchor, ann) else {
                return None;
            };
            let vals: Vec<f64> = ann.events.iter().map(|e| attr_value(e, *attr)).collect();
            if (0..n).any(|j| j != i && ties(vals[j], vals[i])) {
                return None;
            }
            Some(mask_where(&|j| {
                j != i && if cmp.is_greater() { vals[j] > vals[i] } else { vals[j] < vals[i] }
            }))
        }
        SetSelector::OfType { type_id, set } => {
            let inner = resolve_set(set, ann)?;
            Some(inner & mask_where(&|i| &ann.events[i].type_id == type_id))
        }
    }
}

/// Answer `query` on `ann`, or `None` when the question is ill-posed for
/// this clip.
pub fn evaluate(query: &Query, ann: &ClipAnnotation) -> Option<Answer> {
    match query {
        Query::Exist(s) => Some(Answer::from_bool(resolve_set(s, ann)? != 0)),
        Query::Count(s) => {
            let c = resolve_set(s, ann)?.count_ones() as usize;
            (c <= MAX_COUNT as usize).then_some(Answer::Count(c as u8))
        }
        Query::QueryType(sel) => match resolve_selector(sel, ann) {
            Resolved::Event(i) => Some(Answer::Event(ann.events[i].type_id.clone())),
            Resolved::Nothing => Some(Answer::Nothing),
            Resolved::Invalid => None,
        },
        Query::CompareAttr { a, b, attr, rel } => {
            let (Resolved::Event(i), Resolved::Event(j)) = (resolve_selector(a, ann), resolve_selector(b, ann)) else {
                return None;
            };
            if i == j {
                return None;
            }
            let (va, vb) = (attr_value(&ann.events[i], *attr), attr_value(&ann.events[j], *attr));
            if ties(va, vb) {
                return None;
            }
            Some(Answer::from_bool(match rel {
                AttrRel::Greater => va > vb,
                AttrRel::Less => va < vb,
                AttrRel::Equal => false,
            }))
        }
        Query::CompareSame { a, b } => match (resolve_selector(a, ann), resolve_selector(b, ann)) {
            (Resolved::Invalid, _) | (_, Resolved::Invalid) => None,
            (Resolved::Event(i), Resolved::Event(j)) if i == j => None,
            (Resolved::Event(i), Resolved::Event(j)) => {
                Some(Answer::from_bool(ann.events[i].type_id == ann.events[j].type_id))
            }
            _ => Some(Answer::No),
        },
        Query::CompareInt { a, b, rel } => {
            let ca = resolve_set(a, ann)?.count_ones();
            let cb = resolve_set(b, ann)?.count_ones();
            Some(Answer::from_bool(match rel {
                IntRel::More => ca > cb,
                IntRel::Fewer => ca < cb,
                IntRel::Equal => ca == cb,
            }))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MismatchKind {
    MissingClip,
    WrongAnswer { recorded: String, oracle: String },
    IllPosed { recorded: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub question_id: String,
    #[serde(flatten)]
    pub kind: MismatchKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub total: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn count(&self, pred: impl Fn(&MismatchKind) -> bool) -> usize {
        self.mismatches.iter().filter(|m| pred(&m.kind)).count()
    }
}

/// Re-evaluate every question against its clip.
pub fn verify_dataset(questions: &[QuestionInstance], annotations: &[ClipAnnotation]) -> VerifyReport {
    let by_id: HashMap<&str, &ClipAnnotation> = annotations.iter().map(|a| (a.clip_id.as_str(), a)).collect();
    let mut report = VerifyReport {
        total: questions.len(),
        mismatches: Vec::new(),
    };
    for q in questions {
        let kind = match by_id.get(q.clip_id.as_str()) {
            None => Some(MismatchKind::MissingClip),
            Some(ann) => match evaluate(&q.ast, ann) {
                None => Some(MismatchKind::IllPosed {
                    recorded: q.answer.token(),
                }),
                Some(a) if a != q.answer => Some(MismatchKind::WrongAnswer {
                    recorded: q.answer.token(),
                    oracle: a.token(),
                }),
                Some(_) => None,
            },
        };
        if let Some(kind) = kind {
            report.mismatches.push(Mismatch {
                question_id: q.question_id.clone(),
                kind,
            });
        }
    }
    report
}
