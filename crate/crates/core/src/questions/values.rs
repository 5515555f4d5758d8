//! Placeholder kinds, bound values and their surface words.

use serde::{Deserialize, Serialize};

use crate::ast::{Attr, AttrRel, Cmp, Direction, Extreme, IntRel, Ordinal};
use crate::events::EventType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceholderKind {
    Source,
    Action,
    RelOrder,
    Ordinal,
    Attribute,
    Relation,
    Count,
}

pub const ORDINAL_WORDS: [&str; 12] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth", "eleventh",
    "twelfth",
];

/// A value bound to a placeholder. Source/action pairs bind together as
/// one event type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Type(String),
    Dir(Direction),
    Ord(Ordinal),
    Comparative(Cmp),
    Superlative(Attr, Extreme),
    Rel(IntRel),
    Count(u8),
}

impl Value {
    /// Parse the word form of a non-type value for a placeholder kind.
    pub fn parse(kind: PlaceholderKind, word: &str) -> Option<Value> {
        match kind {
            PlaceholderKind::Source | PlaceholderKind::Action => Some(Value::Type(word.to_string())),
            PlaceholderKind::RelOrder => match word {
                "before" => Some(Value::Dir(Direction::Before)),
                "after" => Some(Value::Dir(Direction::After)),
                _ => None,
            },
            PlaceholderKind::Ordinal => {
                if word == "last" {
                    return Some(Value::Ord(Ordinal::Last));
                }
                ORDINAL_WORDS
                    .iter()
                    .position(|w| *w == word)
                    .map(|k| Value::Ord(Ordinal::Nth(k + 1)))
            }
            PlaceholderKind::Attribute => match word {
                "longer" => Some(Value::Comparative(Cmp::Longer)),
                "shorter" => Some(Value::Comparative(Cmp::Shorter)),
                "louder" => Some(Value::Comparative(Cmp::Louder)),
                "quieter" => Some(Value::Comparative(Cmp::Quieter)),
                "longest" => Some(Value::Superlative(Attr::Duration, Extreme::Max)),
                "shortest" => Some(Value::Superlative(Attr::Duration, Extreme::Min)),
                "loudest" => Some(Value::Superlative(Attr::Loudness, Extreme::Max)),
                "quietest" => Some(Value::Superlative(Attr::Loudness, Extreme::Min)),
                _ => None,
            },
            PlaceholderKind::Relation => match word {
                "more" => Some(Value::Rel(IntRel::More)),
                "fewer" => Some(Value::Rel(IntRel::Fewer)),
                "equal" => Some(Value::Rel(IntRel::Equal)),
                _ => None,
            },
            PlaceholderKind::Count => word.parse().ok().filter(|&n: &u8| n <= 12).map(Value::Count),
        }
    }

    /// Default domain for kinds that have one.
    pub fn default_words(kind: PlaceholderKind) -> Vec<String> {
        let words: Vec<&str> = match kind {
            PlaceholderKind::RelOrder => vec!["before", "after"],
            PlaceholderKind::Ordinal => ORDINAL_WORDS.to_vec(),
            PlaceholderKind::Relation => vec!["more", "fewer"],
            PlaceholderKind::Count => return (0..=12).map(|n| n.to_string()).collect(),
            _ => vec![],
        };
        words.into_iter().map(String::from).collect()
    }

    /// Surface text. Types render as their source or action words.
    pub fn word(&self, kind: PlaceholderKind, types: &[EventType]) -> String {
        match self {
            Value::Type(id) => {
                let ty = types.iter().find(|t| &t.id == id);
                match (kind, ty) {
                    (PlaceholderKind::Action, Some(t)) => t.action.clone(),
                    (_, Some(t)) => t.source.clone(),
                    (_, None) => id.clone(),
                }
            }
            Value::Dir(Direction::Before) => "before".into(),
            Value::Dir(Direction::After) => "after".into(),
            Value::Ord(Ordinal::Last) => "last".into(),
            Value::Ord(Ordinal::Nth(k)) => ORDINAL_WORDS.get(k - 1).map_or_else(|| k.to_string(), |w| w.to_string()),
            Value::Comparative(c) => match c {
                Cmp::Longer => "longer",
                Cmp::Shorter => "shorter",
                Cmp::Louder => "louder",
                Cmp::Quieter => "quieter",
            }
            .into(),
            Value::Superlative(a, e) => match (a, e) {
                (Attr::Duration, Extreme::Max) => "longest",
                (Attr::Duration, Extreme::Min) => "shortest",
                (Attr::Loudness, Extreme::Max) => "loudest",
                (Attr::Loudness, Extreme::Min) => "quietest",
            }
            .into(),
            Value::Rel(r) => match r {
                IntRel::More => "more",
                IntRel::Fewer => "fewer",
                IntRel::Equal => "equal",
            }
            .into(),
            Value::Count(n) => n.to_string(),
        }
    }

    /// JSON value for a semantics slot `$NAME` or `$NAME.accessor`.
    pub fn slot(&self, accessor: Option<&str>) -> Option<serde_json::Value> {
        use serde_json::json;
        let v = match (self, accessor) {
            (Value::Type(id), None) => json!(id),
            (Value::Dir(d), None) => serde_json::to_value(d).ok()?,
            (Value::Ord(o), None) => serde_json::to_value(o).ok()?,
            (Value::Rel(r), None) => serde_json::to_value(r).ok()?,
            (Value::Count(n), None) => json!(n),
            (Value::Comparative(c), Some("attr")) => serde_json::to_value(c.attr()).ok()?,
            (Value::Comparative(c), Some("cmp")) => serde_json::to_value(c).ok()?,
            (Value::Comparative(c), Some("rel")) => {
                serde_json::to_value(if c.is_greater() { AttrRel::Greater } else { AttrRel::Less }).ok()?
            }
            (Value::Superlative(a, _), Some("attr")) => serde_json::to_value(a).ok()?,
            (Value::Superlative(_, e), Some("ext")) => serde_json::to_value(e).ok()?,
            _ => return None,
        };
        Some(v)
    }
}
