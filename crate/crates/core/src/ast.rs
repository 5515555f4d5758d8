//! Typed question semantics shared by the question engine and the oracle.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Deepest tree allowed in a question, counting the root as level 1.
pub const MAX_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attr {
    Duration,
    Loudness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extreme {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Before,
    After,
}

/// Comparative used by attribute filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cmp {
    Longer,
    Shorter,
    Louder,
    Quieter,
}

impl Cmp {
    pub fn attr(self) -> Attr {
        match self {
            Cmp::Longer | Cmp::Shorter => Attr::Duration,
            Cmp::Louder | Cmp::Quieter => Attr::Loudness,
        }
    }

    /// True for the comparatives that select larger attribute values.
    pub fn is_greater(self) -> bool {
        matches!(self, Cmp::Longer | Cmp::Louder)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrRel {
    Greater,
    Less,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntRel {
    More,
    Fewer,
    Equal,
}

/// 1-based position or the final event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ordinal {
    Nth(usize),
    Last,
}

impl Serialize for Ordinal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ordinal::Nth(n) => s.serialize_u64(*n as u64),
            Ordinal::Last => s.serialize_str("last"),
        }
    }
}

impl<'de> Deserialize<'de> for Ordinal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Ordinal;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive integer or \"last\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Ordinal, E> {
                if v == 0 {
                    return Err(E::custom("ordinals are 1-based"));
                }
                Ok(Ordinal::Nth(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Ordinal, E> {
                if v <= 0 {
                    return Err(E::custom("ordinals are 1-based"));
                }
                Ok(Ordinal::Nth(v as usize))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Ordinal, E> {
                if v == "last" {
                    Ok(Ordinal::Last)
                } else {
                    Err(E::custom(format!("bad ordinal {v:?}")))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// A reference to a single event occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    ByType(String),
    ByOrdinal(Ordinal),
    Relative {
        anchor: Box<Selector>,
        dir: Direction,
        immediate: bool,
    },
    Superlative {
        attr: Attr,
        ext: Extreme,
    },
}

/// A reference to a set of event occurrences.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetSelector {
    AllOfType(String),
    AllSide {
        anchor: Box<Selector>,
        dir: Direction,
    },
    AttrFiltered {
        attr: Attr,
        cmp: Cmp,
        anchor: Box<Selector>,
    },
    AllEvents,
    /// Members of `set` whose type is `type_id`.
    OfType {
        type_id: String,
        set: Box<SetSelector>,
    },
    /// The occurrence directly next to `anchor`, or the empty set at a clip
    /// boundary.
    Adjacent {
        anchor: Box<Selector>,
        dir: Direction,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    Exist(SetSelector),
    QueryType(Selector),
    Count(SetSelector),
    CompareAttr {
        a: Selector,
        b: Selector,
        attr: Attr,
        rel: AttrRel,
    },
    CompareSame {
        a: Selector,
        b: Selector,
    },
    CompareInt {
        a: SetSelector,
        b: SetSelector,
        rel: IntRel,
    },
}

impl Selector {
    pub fn by_type(t: &str) -> Self {
        Selector::ByType(t.to_string())
    }

    pub fn nth(n: usize) -> Self {
        Selector::ByOrdinal(Ordinal::Nth(n))
    }

    pub fn relative(anchor: Selector, dir: Direction, immediate: bool) -> Self {
        Selector::Relative {
            anchor: Box::new(anchor),
            dir,
            immediate,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Selector::Relative { anchor, .. } => 1 + anchor.depth(),
            _ => 1,
        }
    }

    fn type_ids<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Selector::ByType(t) => out.push(t),
            Selector::Relative { anchor, .. } => anchor.type_ids(out),
            _ => {}
        }
    }
}

impl SetSelector {
    pub fn all_of_type(t: &str) -> Self {
        SetSelector::AllOfType(t.to_string())
    }

    pub fn all_side(anchor: Selector, dir: Direction) -> Self {
        SetSelector::AllSide {
            anchor: Box::new(anchor),
            dir,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            SetSelector::AllOfType(_) | SetSelector::AllEvents => 1,
            SetSelector::AllSide { anchor, .. }
            | SetSelector::AttrFiltered { anchor, .. }
            | SetSelector::Adjacent { anchor, .. } => 1 + anchor.depth(),
            SetSelector::OfType { set, .. } => 1 + set.depth(),
        }
    }

    fn check(&self) -> Result<()> {
        if let SetSelector::AttrFiltered { attr, cmp, .. } = self {
            if cmp.attr() != *attr {
                return Err(Error::Schema(format!(
                    "attribute filter mixes {attr:?} with comparative {cmp:?}"
                )));
            }
        }
        if let SetSelector::OfType { set, .. } = self {
            set.check()?;
        }
        Ok(())
    }

    fn type_ids<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            SetSelector::AllOfType(t) => out.push(t),
            SetSelector::OfType { type_id, set } => {
                out.push(type_id);
                set.type_ids(out);
            }
            SetSelector::AllSide { anchor, .. }
            | SetSelector::AttrFiltered { anchor, .. }
            | SetSelector::Adjacent { anchor, .. } => anchor.type_ids(out),
            SetSelector::AllEvents => {}
        }
    }
}

impl Query {
    /// Tree depth with the root counted as level 1.
    pub fn depth(&self) -> usize {
        1 + match self {
            Query::Exist(s) | Query::Count(s) => s.depth(),
            Query::QueryType(s) => s.depth(),
            Query::CompareAttr { a, b, .. } | Query::CompareSame { a, b } => a.depth().max(b.depth()),
            Query::CompareInt { a, b, .. } => a.depth().max(b.depth()),
        }
    }

    /// Structural invariants: depth bound and no attribute mixing.
    pub fn validate(&self) -> Result<()> {
        if self.depth() > MAX_DEPTH {
            return Err(Error::Schema(format!(
                "question depth {} exceeds {MAX_DEPTH}",
                self.depth()
            )));
        }
        match self {
            Query::Exist(s) | Query::Count(s) => s.check(),
            Query::CompareInt { a, b, .. } => {
                a.check()?;
                b.check()
            }
            _ => Ok(()),
        }
    }

    /// Every event type id mentioned anywhere in the tree.
    pub fn type_ids(&self) -> Vec<&str> {
        let mut out = Vec::new();
        match self {
            Query::Exist(s) | Query::Count(s) => s.type_ids(&mut out),
            Query::QueryType(s) => s.type_ids(&mut out),
            Query::CompareAttr { a, b, .. } | Query::CompareSame { a, b } => {
                a.type_ids(&mut out);
                b.type_ids(&mut out);
            }
            Query::CompareInt { a, b, .. } => {
                a.type_ids(&mut out);
                b.type_ids(&mut out);
            }
        }
        out
    }

    /// True when the tree refers to events by position or order.
    pub fn is_temporal(&self) -> bool {
        let json = serde_json::to_string(self).unwrap_or_default();
        ["by_ordinal", "relative", "all_side", "adjacent"]
            .iter()
            .any(|k| json.contains(k))
    }
}
