//! Exhaustive small-world comparison of the oracle against a reference that
//! materializes event subsets explicitly.

use audioqa_core::answer::Answer;
use audioqa_core::ast::*;
use audioqa_core::clips::ClipAnnotation;
use audioqa_core::oracle;

pub const TYPES: [&str; 3] = ["t0", "t1", "t2"];
const MAX_EVENTS: usize = 4;

/// Rank vectors (0 = smallest, equal ranks tie) covering every weak ordering
/// of `n` items.
pub fn weak_orderings(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let total = n.pow(n as u32).max(1);
    for code in 0..total {
        let mut c = code;
        let r: Vec<usize> = (0..n)
            .map(|_| {
                let d = c % n.max(1);
                c /= n.max(1);
                d
            })
            .collect();
        let k = r.iter().max().map_or(0, |m| m + 1);
        if (0..k).all(|v| r.contains(&v)) {
            out.push(r);
        }
    }
    out
}

/// Type sequences up to relabeling: the first occurrence of type k comes
/// after the first occurrence of type k-1.
fn type_sequences(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for s in out {
            let fresh = s.iter().max().map_or(0, |m| m + 1);
            for t in 0..=fresh.min(TYPES.len() - 1) {
                let mut s2 = s.clone();
                s2.push(t);
                next.push(s2);
            }
        }
        out = next;
    }
    out
}

fn world(types: &[usize], dur: &[usize], loud: &[usize]) -> ClipAnnotation {
    let ev: Vec<(&str, f64, f64)> = types
        .iter()
        .zip(dur.iter().zip(loud))
        .map(|(&t, (&d, &l))| (TYPES[t], 1.0 + d as f64, 0.25 * (1 + l) as f64))
        .collect();
    ClipAnnotation::from_events("w", &ev)
}

/// Every type sequence of up to four events (three types, up to relabeling)
/// with every weak ordering of duration and of loudness. The two orderings
/// are crossed in full up to three events; at four events each is varied
/// while the other stays strictly increasing.
pub fn worlds() -> Vec<ClipAnnotation> {
    let mut out = Vec::new();
    for n in 0..=MAX_EVENTS {
        let orders = weak_orderings(n);
        let strict: Vec<usize> = (0..n).collect();
        for types in type_sequences(n) {
            if n < MAX_EVENTS {
                for d in &orders {
                    for l in &orders {
                        out.push(world(&types, d, l));
                    }
                }
            } else {
                for o in &orders {
                    out.push(world(&types, o, &strict));
                    if o != &strict {
                        out.push(world(&types, &strict, o));
                    }
                }
            }
        }
    }
    out
}

/// Reference resolution of a singular reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ref {
    At(usize),
    Nothing,
    Invalid,
}

fn attr_of(ann: &ClipAnnotation, i: usize, a: Attr) -> f64 {
    let e = &ann.events[i];
    match a {
        Attr::Duration => e.end_s - e.start_s,
        Attr::Loudness => e.loudness,
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// The subset of events whose membership test passes, found by scanning
/// every subset for the one that agrees with the test on each event.
fn materialize(n: usize, member: impl Fn(usize) -> bool) -> Vec<usize> {
    let want: Vec<bool> = (0..n).map(&member).collect();
    for mask in 0u32..(1 << n) {
        if (0..n).all(|i| (mask >> i & 1 == 1) == want[i]) {
            return (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        }
    }
    unreachable!("some subset matches")
}

fn ref_sel(sel: &Selector, ann: &ClipAnnotation) -> Ref {
    let n = ann.events.len();
    match sel {
        Selector::ByType(t) => {
            let s = materialize(n, |i| &ann.events[i].type_id == t);
            if s.len() == 1 {
                Ref::At(s[0])
            } else {
                Ref::Invalid
            }
        }
        Selector::ByOrdinal(Ordinal::Nth(k)) => {
            if (1..=n).contains(k) {
                Ref::At(k - 1)
            } else {
                Ref::Invalid
            }
        }
        Selector::ByOrdinal(Ordinal::Last) => n.checked_sub(1).map_or(Ref::Invalid, Ref::At),
        Selector::Relative { anchor, dir, immediate } => {
            if !immediate {
                return Ref::Invalid;
            }
            match ref_sel(anchor, ann) {
                Ref::At(i) => {
                    let j = match dir {
                        Direction::Before => i.checked_sub(1),
                        Direction::After => Some(i + 1).filter(|&j| j < n),
                    };
                    j.map_or(Ref::Nothing, Ref::At)
                }
                _ => Ref::Invalid,
            }
        }
        Selector::Superlative { attr, ext } => {
            // the unique event that beats every other one strictly
            let beats = |i: usize, j: usize| {
                let (a, b) = (attr_of(ann, i, *attr), attr_of(ann, j, *attr));
                !same(a, b) && if *ext == Extreme::Max { a > b } else { a < b }
            };
            let s = materialize(n, |i| (0..n).all(|j| j == i || beats(i, j)));
            if s.len() == 1 {
                Ref::At(s[0])
            } else {
                Ref::Invalid
            }
        }
    }
}

fn ref_set(set: &SetSelector, ann: &ClipAnnotation) -> Option<Vec<usize>> {
    let n = ann.events.len();
    let anchor_at = |a: &Selector| match ref_sel(a, ann) {
        Ref::At(i) => Some(i),
        _ => None,
    };
    Some(match set {
        SetSelector::AllEvents => materialize(n, |_| true),
        SetSelector::AllOfType(t) => materialize(n, |i| &ann.events[i].type_id == t),
        SetSelector::AllSide { anchor, dir } => {
            let a = anchor_at(anchor)?;
            materialize(n, |i| if *dir == Direction::Before { i < a } else { i > a })
        }
        SetSelector::Adjacent { anchor, dir } => {
            let a = anchor_at(anchor)?;
            materialize(n, |i| if *dir == Direction::Before { i + 1 == a } else { i == a + 1 })
        }
        SetSelector::AttrFiltered { attr, cmp, anchor } => {
            if cmp.attr() != *attr {
                return None;
            }
            let a = anchor_at(anchor)?;
            let va = attr_of(ann, a, *attr);
            if (0..n).any(|j| j != a && same(attr_of(ann, j, *attr), va)) {
                return None;
            }
            materialize(n, |i| {
                let v = attr_of(ann, i, *attr);
                i != a && if cmp.is_greater() { v > va } else { v < va }
            })
        }
        SetSelector::OfType { type_id, set } => {
            let inner = ref_set(set, ann)?;
            materialize(n, |i| inner.contains(&i) && &ann.events[i].type_id == type_id)
        }
    })
}

/// Reference answer built from memoized sub-results.
fn ref_query(q: &Family, sels: &[Ref], sets: &[Option<Vec<usize>>], ann: &ClipAnnotation) -> Option<Answer> {
    let yes = Answer::from_bool;
    match *q {
        Family::Exist(s) => sets[s].as_ref().map(|v| yes(!v.is_empty())),
        Family::Count(s) => sets[s].as_ref().map(|v| Answer::Count(v.len() as u8)),
        Family::QueryType(s) => match sels[s] {
            Ref::At(i) => Some(Answer::Event(ann.events[i].type_id.clone())),
            Ref::Nothing => Some(Answer::Nothing),
            Ref::Invalid => None,
        },
        Family::CompareAttr(a, b, attr, rel) => match (sels[a], sels[b]) {
            (Ref::At(i), Ref::At(j)) if i != j => {
                let (x, y) = (attr_of(ann, i, attr), attr_of(ann, j, attr));
                if same(x, y) {
                    None
                } else {
                    Some(yes(match rel {
                        AttrRel::Greater => x > y,
                        AttrRel::Less => x < y,
                        AttrRel::Equal => false,
                    }))
                }
            }
            _ => None,
        },
        Family::CompareSame(a, b) => match (sels[a], sels[b]) {
            (Ref::Invalid, _) | (_, Ref::Invalid) => None,
            (Ref::At(i), Ref::At(j)) if i == j => None,
            (Ref::At(i), Ref::At(j)) => Some(yes(ann.events[i].type_id == ann.events[j].type_id)),
            _ => Some(Answer::No),
        },
        Family::CompareInt(a, b, rel) => {
            let (x, y) = (sets[a].as_ref()?.len(), sets[b].as_ref()?.len());
            Some(yes(match rel {
                IntRel::More => x > y,
                IntRel::Fewer => x < y,
                IntRel::Equal => x == y,
            }))
        }
    }
}

/// Query shape over indices into the selector and set tables.
#[derive(Debug, Clone, Copy)]
enum Family {
    Exist(usize),
    Count(usize),
    QueryType(usize),
    CompareAttr(usize, usize, Attr, AttrRel),
    CompareSame(usize, usize),
    CompareInt(usize, usize, IntRel),
}

pub struct AstFamily {
    sels: Vec<Selector>,
    sets: Vec<SetSelector>,
    queries: Vec<(Family, Query)>,
}

const DIRS: [Direction; 2] = [Direction::Before, Direction::After];
const ATTRS: [Attr; 2] = [Attr::Duration, Attr::Loudness];

impl AstFamily {
    /// Every well-formed query of depth at most 3 over the three types,
    /// with ordinals 1..=5 and last.
    pub fn build() -> Self {
        let mut leaves: Vec<Selector> = TYPES.iter().map(|t| Selector::by_type(t)).collect();
        leaves.extend((1..=MAX_EVENTS + 1).map(Selector::nth));
        leaves.push(Selector::ByOrdinal(Ordinal::Last));
        for attr in ATTRS {
            for ext in [Extreme::Max, Extreme::Min] {
                leaves.push(Selector::Superlative { attr, ext });
            }
        }
        let mut sels = leaves.clone();
        for a in &leaves {
            for dir in DIRS {
                for immediate in [true, false] {
                    sels.push(Selector::relative(a.clone(), dir, immediate));
                }
            }
        }
        let mut base: Vec<SetSelector> = TYPES.iter().map(|t| SetSelector::all_of_type(t)).collect();
        base.push(SetSelector::AllEvents);
        let mut sets = base.clone();
        for a in &leaves {
            for dir in DIRS {
                sets.push(SetSelector::all_side(a.clone(), dir));
                sets.push(SetSelector::Adjacent {
                    anchor: Box::new(a.clone()),
                    dir,
                });
            }
            for cmp in [Cmp::Longer, Cmp::Shorter, Cmp::Louder, Cmp::Quieter] {
                sets.push(SetSelector::AttrFiltered {
                    attr: cmp.attr(),
                    cmp,
                    anchor: Box::new(a.clone()),
                });
            }
        }
        for t in TYPES {
            for s in &base {
                sets.push(SetSelector::OfType {
                    type_id: t.to_string(),
                    set: Box::new(s.clone()),
                });
            }
        }

        let mut queries = Vec::new();
        for (i, s) in sets.iter().enumerate() {
            queries.push((Family::Exist(i), Query::Exist(s.clone())));
            queries.push((Family::Count(i), Query::Count(s.clone())));
        }
        for (i, s) in sels.iter().enumerate() {
            queries.push((Family::QueryType(i), Query::QueryType(s.clone())));
        }
        for (i, a) in sels.iter().enumerate() {
            for (j, b) in sels.iter().enumerate() {
                queries.push((Family::CompareSame(i, j), Query::CompareSame { a: a.clone(), b: b.clone() }));
                for attr in ATTRS {
                    for rel in [AttrRel::Greater, AttrRel::Less, AttrRel::Equal] {
                        let q = Query::CompareAttr {
                            a: a.clone(),
                            b: b.clone(),
                            attr,
                            rel,
                        };
                        queries.push((Family::CompareAttr(i, j, attr, rel), q));
                    }
                }
            }
        }
        for (i, a) in sets.iter().enumerate() {
            for (j, b) in sets.iter().enumerate() {
                for rel in [IntRel::More, IntRel::Fewer, IntRel::Equal] {
                    let q = Query::CompareInt {
                        a: a.clone(),
                        b: b.clone(),
                        rel,
                    };
                    queries.push((Family::CompareInt(i, j, rel), q));
                }
            }
        }
        AstFamily { sels, sets, queries }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn max_depth(&self) -> usize {
        self.queries.iter().map(|(_, q)| q.depth()).max().unwrap_or(0)
    }

    pub fn all_valid(&self) -> bool {
        self.queries.iter().all(|(_, q)| q.validate().is_ok())
    }

    /// Disagreements on one world, with the first offending query.
    pub fn compare(&self, ann: &ClipAnnotation) -> (usize, Option<String>) {
        let sels: Vec<Ref> = self.sels.iter().map(|s| ref_sel(s, ann)).collect();
        let sets: Vec<Option<Vec<usize>>> = self.sets.iter().map(|s| ref_set(s, ann)).collect();
        let mut bad = 0;
        let mut first = None;
        for (f, q) in &self.queries {
            let want = ref_query(f, &sels, &sets, ann);
            let got = oracle::evaluate(q, ann);
            if got != want {
                bad += 1;
                first.get_or_insert_with(|| {
                    format!("{} on {:?}: oracle {got:?}, reference {want:?}", serde_json::to_string(q).unwrap(), ann.events)
                });
            }
        }
        (bad, first)
    }
}
