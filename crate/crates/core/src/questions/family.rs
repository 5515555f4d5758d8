//! Per-family answer procedures.
//!
//! These compute answers straight from bindings and the annotation without
//! going through [`Query`](crate::ast::Query) trees, so they act as a second,
//! independent implementation that every emitted question is checked
//! against. Families read their placeholders by fixed names: `S` and `S2`
//! for event types, `RO` for before/after, `AT` for a comparative and `REL`
//! for a count relation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::catalog::{Bindings, QuestionTemplate};
use super::values::{PlaceholderKind, Value};
use crate::answer::{Answer, MAX_COUNT};
use crate::ast::{Attr, Cmp, Direction, Extreme, IntRel, Ordinal};
use crate::clips::ClipAnnotation;
use crate::oracle::TIE_TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ExistType,
    ExistTypeSide,
    ExistTypeAdjacent,
    ExistSide,
    ExistFiltered,
    ExistTypeFiltered,
    QueryType,
    CountType,
    CountAll,
    CountSide,
    CountFiltered,
    CountTypeSide,
    CountTypeFiltered,
    CompareSame,
    CompareAttr,
    CompareIntTypes,
    CompareIntTypeSide,
    CompareIntSides,
    CompareIntFilteredType,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AnchorBase {
    Type(String),
    Ordinal(String),
    Superlative(String),
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnchorStep {
    /// Neighbor in the direction bound to `RO`.
    Adjacent,
    Before,
    After,
}

/// A singular event reference written as `step:...:base`, e.g.
/// `adj:type:S` is the event next to the unique `S` event in direction `RO`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnchorRef {
    /// Outermost step first.
    pub steps: Vec<AnchorStep>,
    pub base: AnchorBase,
}

impl AnchorRef {
    pub fn placeholders(&self) -> Vec<(&str, PlaceholderKind)> {
        let mut out = Vec::new();
        match &self.base {
            AnchorBase::Type(n) => out.push((n.as_str(), PlaceholderKind::Source)),
            AnchorBase::Ordinal(n) => out.push((n.as_str(), PlaceholderKind::Ordinal)),
            AnchorBase::Superlative(n) => out.push((n.as_str(), PlaceholderKind::Attribute)),
            AnchorBase::Last => {}
        }
        if self.steps.contains(&AnchorStep::Adjacent) {
            out.push(("RO", PlaceholderKind::RelOrder));
        }
        out
    }
}

impl FromStr for AnchorRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let mut steps = Vec::new();
        let mut k = 0;
        while k < parts.len() {
            let step = match parts[k] {
                "adj" => AnchorStep::Adjacent,
                "before" => AnchorStep::Before,
                "after" => AnchorStep::After,
                _ => break,
            };
            steps.push(step);
            k += 1;
        }
        let base = match &parts[k..] {
            ["type", n] => AnchorBase::Type(n.to_string()),
            ["ordinal", n] => AnchorBase::Ordinal(n.to_string()),
            ["superlative", n] => AnchorBase::Superlative(n.to_string()),
            ["last"] => AnchorBase::Last,
            _ => return Err(format!("bad anchor {s:?}")),
        };
        Ok(AnchorRef { steps, base })
    }
}

impl fmt::Display for AnchorRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            f.write_str(match s {
                AnchorStep::Adjacent => "adj:",
                AnchorStep::Before => "before:",
                AnchorStep::After => "after:",
            })?;
        }
        match &self.base {
            AnchorBase::Type(n) => write!(f, "type:{n}"),
            AnchorBase::Ordinal(n) => write!(f, "ordinal:{n}"),
            AnchorBase::Superlative(n) => write!(f, "superlative:{n}"),
            AnchorBase::Last => f.write_str("last"),
        }
    }
}

impl Serialize for AnchorRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AnchorRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What a singular anchor points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ref {
    At(usize),
    Nothing,
    Invalid,
}

fn value_of(ev: &crate::clips::EventOccurrence, attr: Attr) -> f64 {
    match attr {
        Attr::Duration => ev.end_s - ev.start_s,
        Attr::Loudness => ev.loudness,
    }
}

fn tied(a: f64, b: f64) -> bool {
    let scale = if a.abs() > b.abs() { a.abs() } else { b.abs() };
    (a - b).abs() <= TIE_TOLERANCE * scale
}

struct Ctx<'a> {
    ann: &'a ClipAnnotation,
    b: &'a Bindings,
}

impl Ctx<'_> {
    fn n(&self) -> usize {
        self.ann.events.len()
    }

    fn ty(&self, name: &str) -> Option<&str> {
        match self.b.get(name) {
            Some(Value::Type(t)) => Some(t),
            _ => None,
        }
    }

    fn dir(&self) -> Option<Direction> {
        match self.b.get("RO") {
            Some(Value::Dir(d)) => Some(*d),
            _ => None,
        }
    }

    fn cmp(&self) -> Option<Cmp> {
        match self.b.get("AT") {
            Some(Value::Comparative(c)) => Some(*c),
            _ => None,
        }
    }

    fn rel(&self) -> Option<IntRel> {
        match self.b.get("REL") {
            Some(Value::Rel(r)) => Some(*r),
            _ => None,
        }
    }

    fn positions_of(&self, t: &str) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.ann.events[i].type_id == t).collect()
    }

    fn base(&self, base: &AnchorBase) -> Ref {
        match base {
            AnchorBase::Type(name) => match self.ty(name).map(|t| self.positions_of(t)).as_deref() {
                Some([i]) => Ref::At(*i),
                _ => Ref::Invalid,
            },
            AnchorBase::Ordinal(name) => match self.b.get(name) {
                Some(Value::Ord(Ordinal::Nth(k))) if (1..=self.n()).contains(k) => Ref::At(k - 1),
                Some(Value::Ord(Ordinal::Last)) if self.n() > 0 => Ref::At(self.n() - 1),
                _ => Ref::Invalid,
            },
            AnchorBase::Superlative(name) => match self.b.get(name) {
                Some(Value::Superlative(attr, ext)) => self.extreme(*attr, *ext),
                _ => Ref::Invalid,
            },
            AnchorBase::Last => self.n().checked_sub(1).map_or(Ref::Invalid, Ref::At),
        }
    }

    /// Unique extreme by sorting; a tie between the top two is ill-posed.
    fn extreme(&self, attr: Attr, ext: Extreme) -> Ref {
        let mut order: Vec<(f64, usize)> = self.ann.events.iter().map(|e| value_of(e, attr)).zip(0..).collect();
        order.sort_by(|x, y| x.0.total_cmp(&y.0));
        if ext == Extreme::Max {
            order.reverse();
        }
        match order.as_slice() {
            [] => Ref::Invalid,
            [(_, i)] => Ref::At(*i),
            [(a, i), (b, _), ..] => {
                if tied(*a, *b) {
                    Ref::Invalid
                } else {
                    Ref::At(*i)
                }
            }
        }
    }

    fn anchor(&self, a: &AnchorRef) -> Ref {
        let mut r = self.base(&a.base);
        for step in a.steps.iter().rev() {
            let Ref::At(i) = r else { return Ref::Invalid };
            let dir = match step {
                AnchorStep::Adjacent => match self.dir() {
                    Some(d) => d,
                    None => return Ref::Invalid,
                },
                AnchorStep::Before => Direction::Before,
                AnchorStep::After => Direction::After,
            };
            r = match dir {
                Direction::Before if i > 0 => Ref::At(i - 1),
                Direction::After if i + 1 < self.n() => Ref::At(i + 1),
                _ => Ref::Nothing,
            };
        }
        r
    }

    /// Indices strictly on one side of `i`.
    fn side(&self, i: usize, dir: Direction) -> std::ops::Range<usize> {
        match dir {
            Direction::Before => 0..i,
            Direction::After => i + 1..self.n(),
        }
    }

    /// Events other than `i` that beat it under `cmp`; `None` on any tie
    /// with `i`.
    fn filtered(&self, i: usize, cmp: Cmp) -> Option<Vec<usize>> {
        let attr = cmp.attr();
        let v = value_of(&self.ann.events[i], attr);
        let mut out = Vec::new();
        for (j, e) in self.ann.events.iter().enumerate() {
            if j == i {
                continue;
            }
            let w = value_of(e, attr);
            if tied(w, v) {
                return None;
            }
            let wins = match cmp {
                Cmp::Longer | Cmp::Louder => w > v,
                Cmp::Shorter | Cmp::Quieter => w < v,
            };
            if wins {
                out.push(j);
            }
        }
        Some(out)
    }

    fn is_type(&self, j: usize, t: &str) -> bool {
        self.ann.events[j].type_id == t
    }
}

fn count(n: usize) -> Option<Answer> {
    (n <= MAX_COUNT as usize).then_some(Answer::Count(n as u8))
}

fn compare_counts(a: usize, b: usize, rel: IntRel) -> Answer {
    Answer::from_bool(match rel {
        IntRel::More => a > b,
        IntRel::Fewer => a < b,
        IntRel::Equal => a == b,
    })
}

impl Family {
    /// Placeholder names the family reads and the number of anchors it takes.
    fn shape(self) -> (&'static [&'static str], usize) {
        use Family::*;
        match self {
            ExistType | CountType => (&["S"], 0),
            ExistTypeSide | ExistTypeAdjacent | CountTypeSide => (&["S", "RO"], 1),
            ExistSide | CountSide => (&["RO"], 1),
            ExistFiltered | CountFiltered => (&["AT"], 1),
            ExistTypeFiltered | CountTypeFiltered => (&["S", "AT"], 1),
            QueryType => (&[], 1),
            CountAll => (&[], 0),
            CompareSame => (&[], 2),
            CompareAttr => (&["AT"], 2),
            CompareIntTypes => (&["REL", "S", "S2"], 0),
            CompareIntTypeSide => (&["REL", "S", "RO"], 1),
            CompareIntSides => (&["REL"], 1),
            CompareIntFilteredType => (&["REL", "AT", "S2"], 1),
        }
    }

    pub(crate) fn check_shape(self, t: &QuestionTemplate) -> Result<(), String> {
        let (names, anchors) = self.shape();
        for n in names {
            if !t.placeholders.iter().any(|p| p.name == *n) {
                return Err(format!("family {self:?} needs placeholder {n}"));
            }
        }
        if t.anchors.len() != anchors {
            return Err(format!("family {self:?} takes {anchors} anchors, got {}", t.anchors.len()));
        }
        Ok(())
    }

    /// Answer for a complete binding, or `None` if the question would be
    /// ill-posed on this clip.
    pub fn answer(self, anchors: &[AnchorRef], b: &Bindings, ann: &ClipAnnotation) -> Option<Answer> {
        use Family::*;
        let c = Ctx { ann, b };
        let at = |k: usize| match c.anchor(&anchors[k]) {
            Ref::At(i) => Some(i),
            _ => None,
        };
        match self {
            ExistType => Some(Answer::from_bool(!c.positions_of(c.ty("S")?).is_empty())),
            ExistTypeSide => {
                let (t, i) = (c.ty("S")?, at(0)?);
                Some(Answer::from_bool(c.side(i, c.dir()?).any(|j| c.is_type(j, t))))
            }
            ExistTypeAdjacent => {
                let (t, i) = (c.ty("S")?, at(0)?);
                let j = match c.dir()? {
                    Direction::Before => i.checked_sub(1),
                    Direction::After => Some(i + 1).filter(|&j| j < c.n()),
                };
                Some(Answer::from_bool(j.is_some_and(|j| c.is_type(j, t))))
            }
            ExistSide => {
                let i = at(0)?;
                Some(Answer::from_bool(!c.side(i, c.dir()?).is_empty()))
            }
            ExistFiltered => Some(Answer::from_bool(!c.filtered(at(0)?, c.cmp()?)?.is_empty())),
            ExistTypeFiltered => {
                let t = c.ty("S")?;
                let hits = c.filtered(at(0)?, c.cmp()?)?;
                Some(Answer::from_bool(hits.iter().any(|&j| c.is_type(j, t))))
            }
            QueryType => match c.anchor(&anchors[0]) {
                Ref::At(i) => Some(Answer::Event(ann.events[i].type_id.clone())),
                Ref::Nothing => Some(Answer::Nothing),
                Ref::Invalid => None,
            },
            CountType => count(c.positions_of(c.ty("S")?).len()),
            CountAll => count(c.n()),
            CountSide => count(c.side(at(0)?, c.dir()?).len()),
            CountFiltered => count(c.filtered(at(0)?, c.cmp()?)?.len()),
            CountTypeSide => {
                let t = c.ty("S")?;
                count(c.side(at(0)?, c.dir()?).filter(|&j| c.is_type(j, t)).count())
            }
            CountTypeFiltered => {
                let t = c.ty("S")?;
                count(c.filtered(at(0)?, c.cmp()?)?.iter().filter(|&&j| c.is_type(j, t)).count())
            }
            CompareSame => match (c.anchor(&anchors[0]), c.anchor(&anchors[1])) {
                (Ref::Invalid, _) | (_, Ref::Invalid) => None,
                (Ref::At(i), Ref::At(j)) => {
                    if i == j {
                        None
                    } else {
                        Some(Answer::from_bool(ann.events[i].type_id == ann.events[j].type_id))
                    }
                }
                _ => Some(Answer::No),
            },
            CompareAttr => {
                let (i, j, cmp) = (at(0)?, at(1)?, c.cmp()?);
                if i == j {
                    return None;
                }
                let va = value_of(&ann.events[i], cmp.attr());
                let vb = value_of(&ann.events[j], cmp.attr());
                if tied(va, vb) {
                    return None;
                }
                Some(Answer::from_bool(if cmp.is_greater() { va > vb } else { va < vb }))
            }
            CompareIntTypes => {
                let a = c.positions_of(c.ty("S")?).len();
                let b = c.positions_of(c.ty("S2")?).len();
                Some(compare_counts(a, b, c.rel()?))
            }
            CompareIntTypeSide => {
                let a = c.positions_of(c.ty("S")?).len();
                let b = c.side(at(0)?, c.dir()?).len();
                Some(compare_counts(a, b, c.rel()?))
            }
            CompareIntSides => {
                let i = at(0)?;
                Some(compare_counts(i, c.n() - 1 - i, c.rel()?))
            }
            CompareIntFilteredType => {
                let a = c.filtered(at(0)?, c.cmp()?)?.len();
                let b = c.positions_of(c.ty("S2")?).len();
                Some(compare_counts(a, b, c.rel()?))
            }
        }
    }
}
