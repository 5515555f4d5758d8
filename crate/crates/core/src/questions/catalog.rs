use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::family::{AnchorRef, Family};
use super::values::{PlaceholderKind, Value};
use crate::answer::{Answer, MAX_COUNT};
use crate::ast::Query;
use crate::error::{Error, Result};

const BUILTIN_CATALOG: &str = include_str!("../../data/catalog.json");

/// Minimum words in any phrasing.
pub const MIN_PHRASING_WORDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skill {
    Exist,
    Query,
    Count,
    Compare,
    CompareInteger,
}

impl Skill {
    pub const ALL: [Skill; 5] = [Skill::Exist, Skill::Query, Skill::Count, Skill::Compare, Skill::CompareInteger];

    pub fn label(self) -> &'static str {
        match self {
            Skill::Exist => "exist",
            Skill::Query => "query",
            Skill::Count => "count",
            Skill::Compare => "compare",
            Skill::CompareInteger => "compare_integer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placeholder {
    pub name: String,
    pub kind: PlaceholderKind,
    /// Allowed words; defaults per kind when absent. Ignored for source and
    /// action placeholders, which range over the library's event types.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub template_id: String,
    pub skill: Skill,
    pub family: Family,
    #[serde(default)]
    pub anchors: Vec<AnchorRef>,
    pub placeholders: Vec<Placeholder>,
    pub phrasings: Vec<String>,
    pub semantics: serde_json::Value,
    /// Reachable answers: tokens, `N-M` count ranges, or `types` for every
    /// library event type.
    pub support: Vec<String>,
    #[serde(default)]
    pub requires_temporal: bool,
}

/// One binding slot: a source/action pair (keyed by the source name) or a
/// single placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub name: String,
    pub kind: PlaceholderKind,
    /// Parsed domain; empty for type slots.
    pub domain: Vec<Value>,
}

pub type Bindings = BTreeMap<String, Value>;

impl QuestionTemplate {
    /// Binding slots in declaration order. Actions fold into their source.
    pub fn slots(&self) -> Vec<Slot> {
        self.placeholders
            .iter()
            .filter(|p| p.kind != PlaceholderKind::Action)
            .map(|p| {
                let domain = if p.kind == PlaceholderKind::Source {
                    Vec::new()
                } else {
                    p.values
                        .clone()
                        .unwrap_or_else(|| Value::default_words(p.kind))
                        .iter()
                        .filter_map(|w| Value::parse(p.kind, w))
                        .collect()
                };
                Slot {
                    name: p.name.clone(),
                    kind: p.kind,
                    domain,
                }
            })
            .collect()
    }

    /// The support expanded against a list of event type ids.
    pub fn support_answers(&self, type_ids: &[String]) -> Vec<Answer> {
        let mut out = Vec::new();
        for tok in &self.support {
            if tok == "types" {
                out.extend(type_ids.iter().map(|t| Answer::Event(t.clone())));
            } else if let Some((lo, hi)) = parse_range(tok) {
                out.extend((lo..=hi).map(Answer::Count));
            } else if let Ok(a) = tok.parse::<Answer>() {
                out.push(a);
            }
        }
        out
    }

    /// Fill the semantics pattern with bound values.
    pub fn build_ast(&self, bindings: &Bindings) -> Result<Query> {
        let filled = fill(&self.semantics, bindings).map_err(|m| Error::Schema(format!("{}: {m}", self.template_id)))?;
        serde_json::from_value(filled).map_err(|e| Error::Schema(format!("{}: semantics: {e}", self.template_id)))
    }

    fn placeholder(&self, name: &str) -> Option<&Placeholder> {
        self.placeholders.iter().find(|p| p.name == name)
    }

    fn validate(&self) -> Result<()> {
        let id = &self.template_id;
        let err = |m: String| Err(Error::Schema(format!("template {id}: {m}")));
        let mut names = HashSet::new();
        for p in &self.placeholders {
            if !names.insert(p.name.as_str()) {
                return err(format!("duplicate placeholder {}", p.name));
            }
            match p.kind {
                PlaceholderKind::Source | PlaceholderKind::Action => {
                    let partner = pair_name(&p.name, p.kind);
                    let want = if p.kind == PlaceholderKind::Source {
                        PlaceholderKind::Action
                    } else {
                        PlaceholderKind::Source
                    };
                    if partner.as_deref().and_then(|n| self.placeholder(n)).map(|q| q.kind) != Some(want) {
                        return err(format!("placeholder {} has no matching source/action partner", p.name));
                    }
                }
                PlaceholderKind::Attribute if p.values.is_none() => {
                    return err(format!("attribute placeholder {} needs explicit values", p.name));
                }
                _ => {}
            }
            if let Some(values) = &p.values {
                if values.is_empty() {
                    return err(format!("placeholder {} has no values", p.name));
                }
                for w in values {
                    if Value::parse(p.kind, w).is_none() {
                        return err(format!("placeholder {} has bad value {w:?}", p.name));
                    }
                }
            }
        }
        if self.phrasings.len() < 2 {
            return err("needs at least two phrasings".into());
        }
        for ph in &self.phrasings {
            for name in phrasing_placeholders(ph) {
                if self.placeholder(&name).is_none() {
                    return err(format!("phrasing {ph:?} uses undeclared placeholder <{name}>"));
                }
            }
            if ph.split_whitespace().count() < MIN_PHRASING_WORDS {
                return err(format!("phrasing {ph:?} is shorter than {MIN_PHRASING_WORDS} words"));
            }
        }
        check_slots(&self.semantics, self).map_err(|m| Error::Schema(format!("template {id}: {m}")))?;
        for a in &self.anchors {
            for (name, kind) in a.placeholders() {
                match self.placeholder(name) {
                    Some(p) if p.kind == kind => {}
                    _ => return err(format!("anchor {a} refers to missing {kind:?} placeholder {name}")),
                }
            }
        }
        self.family
            .check_shape(self)
            .map_err(|m| Error::Schema(format!("template {id}: {m}")))?;
        let support = self.support_answers(&["x".to_string()]);
        if support.is_empty() || support.len() < self.support.len() {
            return err(format!("bad support {:?}", self.support));
        }
        if support.iter().any(|a| matches!(a, Answer::Count(n) if *n > MAX_COUNT)) {
            return err("support count above 12".into());
        }

        // Instantiate with every combination of non-type values (types fixed
        // to placeholders' own names) and check tree invariants.
        let slots = self.slots();
        let mut combos: Vec<Bindings> = vec![Bindings::new()];
        for (k, slot) in slots.iter().enumerate() {
            let choices: Vec<Value> = if slot.kind == PlaceholderKind::Source {
                vec![Value::Type(format!("t{k}"))]
            } else {
                slot.domain.clone()
            };
            combos = combos
                .into_iter()
                .flat_map(|b| {
                    choices.iter().map(move |v| {
                        let mut b = b.clone();
                        b.insert(slot.name.clone(), v.clone());
                        b
                    })
                })
                .collect();
        }
        let mut temporal = None;
        for b in &combos {
            let q = self.build_ast(b)?;
            q.validate().map_err(|e| Error::Schema(format!("template {id}: {e}")))?;
            temporal = Some(temporal.unwrap_or(false) || q.is_temporal());
        }
        if self.requires_temporal && temporal == Some(false) {
            return err("marked temporal but semantics has no order reference".into());
        }
        Ok(())
    }
}

fn parse_range(tok: &str) -> Option<(u8, u8)> {
    let (a, b) = tok.split_once('-')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

/// `S` pairs with `A`, `S2` with `A2`.
fn pair_name(name: &str, kind: PlaceholderKind) -> Option<String> {
    match kind {
        PlaceholderKind::Source => name.strip_prefix('S').map(|s| format!("A{s}")),
        PlaceholderKind::Action => name.strip_prefix('A').map(|s| format!("S{s}")),
        _ => None,
    }
}

/// Names inside `<...>` in a phrasing.
pub(crate) fn phrasing_placeholders(ph: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = ph;
    while let Some(i) = rest.find('<') {
        let Some(j) = rest[i..].find('>') else { break };
        out.push(rest[i + 1..i + j].to_string());
        rest = &rest[i + j + 1..];
    }
    out
}

fn split_slot(s: &str) -> Option<(&str, Option<&str>)> {
    let body = s.strip_prefix('$')?;
    Some(match body.split_once('.') {
        Some((n, a)) => (n, Some(a)),
        None => (body, None),
    })
}

fn fill(v: &serde_json::Value, b: &Bindings) -> std::result::Result<serde_json::Value, String> {
    use serde_json::Value as J;
    Ok(match v {
        J::String(s) => match split_slot(s) {
            Some((name, acc)) => {
                let val = b.get(name).ok_or_else(|| format!("unbound slot ${name}"))?;
                val.slot(acc).ok_or_else(|| format!("slot {s} does not fit value {val:?}"))?
            }
            None => v.clone(),
        },
        J::Array(xs) => J::Array(xs.iter().map(|x| fill(x, b)).collect::<std::result::Result<_, _>>()?),
        J::Object(m) => J::Object(
            m.iter()
                .map(|(k, x)| Ok((k.clone(), fill(x, b)?)))
                .collect::<std::result::Result<_, String>>()?,
        ),
        _ => v.clone(),
    })
}

/// Slots must name declared placeholders; comparisons taking their relation
/// from an attribute placeholder must take the attribute from the same one.
fn check_slots(v: &serde_json::Value, t: &QuestionTemplate) -> std::result::Result<(), String> {
    use serde_json::Value as J;
    match v {
        J::String(s) => {
            if let Some((name, _)) = split_slot(s) {
                match t.placeholder(name) {
                    Some(p) if p.kind != PlaceholderKind::Action => {}
                    _ => return Err(format!("semantics slot {s} names no declared placeholder")),
                }
            }
            Ok(())
        }
        J::Array(xs) => xs.iter().try_for_each(|x| check_slots(x, t)),
        J::Object(m) => {
            for key in ["rel", "cmp"] {
                if let Some(J::String(r)) = m.get(key) {
                    if let Some((name, Some(_))) = split_slot(r) {
                        let want = format!("${name}.attr");
                        if m.get("attr").and_then(|a| a.as_str()) != Some(want.as_str()) {
                            return Err(format!(
                                "comparison mixes attribute {:?} with {key} from {name}",
                                m.get("attr")
                            ));
                        }
                    }
                }
            }
            m.values().try_for_each(|x| check_slots(x, t))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub templates: Vec<QuestionTemplate>,
}

impl Catalog {
    /// The shipped 54-template catalog.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_CATALOG).expect("builtin catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cat: Catalog =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("catalog: {e}")))?;
        cat.validate()?;
        for t in &mut cat.templates {
            if !t.requires_temporal {
                let b = placeholder_names_as_types(t);
                t.requires_temporal = t.build_ast(&b).map(|q| q.is_temporal()).unwrap_or(false);
            }
        }
        Ok(cat)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for t in &self.templates {
            if !ids.insert(t.template_id.as_str()) {
                return Err(Error::Schema(format!("duplicate template id {}", t.template_id)));
            }
            t.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&QuestionTemplate> {
        self.templates.iter().find(|t| t.template_id == id)
    }
}

fn placeholder_names_as_types(t: &QuestionTemplate) -> Bindings {
    t.slots()
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            let v = s.domain.first().cloned().unwrap_or(Value::Type(format!("t{k}")));
            (s.name, v)
        })
        .collect()
}
