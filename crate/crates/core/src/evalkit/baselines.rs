use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::EvalItem;
use crate::rng::{label_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    Mode,
    RandomPerTemplate,
    ModePerTemplate,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::Random,
        BaselineKind::Mode,
        BaselineKind::RandomPerTemplate,
        BaselineKind::ModePerTemplate,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::Mode => "mode",
            BaselineKind::RandomPerTemplate => "random_per_template",
            BaselineKind::ModePerTemplate => "mode_per_template",
        }
    }
}

/// Training-split answer statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub classes: usize,
    pub global_mode: usize,
    pub template_mode: BTreeMap<String, usize>,
    /// Reachable answers per template, as vocabulary indices.
    pub supports: BTreeMap<String, Vec<usize>>,
}

/// Most frequent index, lowest index on ties.
fn mode_of(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

impl Baselines {
    pub fn fit(train: &[EvalItem], supports: BTreeMap<String, Vec<usize>>, classes: usize) -> Self {
        let mut global = vec![0usize; classes];
        let mut per: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for it in train {
            global[it.label] += 1;
            per.entry(it.template_id.clone()).or_insert_with(|| vec![0; classes])[it.label] += 1;
        }
        Baselines {
            classes,
            global_mode: mode_of(&global),
            template_mode: per.into_iter().map(|(t, c)| (t, mode_of(&c))).collect(),
            supports,
        }
    }

    /// Predictions for `items`. Random draws are keyed by question id, so a
    /// question's guess does not depend on what else is in the list.
    pub fn predict(&self, kind: BaselineKind, items: &[EvalItem], seed: u64) -> Vec<usize> {
        items
            .iter()
            .map(|it| {
                let rng = || rng_from(seed, &[label_seed(kind.label()), label_seed(&it.question_id)]);
                match kind {
                    BaselineKind::Random => rng().random_range(0..self.classes),
                    BaselineKind::Mode => self.global_mode,
                    BaselineKind::RandomPerTemplate => match self.supports.get(&it.template_id) {
                        Some(s) if !s.is_empty() => s[rng().random_range(0..s.len())],
                        _ => rng().random_range(0..self.classes),
                    },
                    BaselineKind::ModePerTemplate => {
                        self.template_mode.get(&it.template_id).copied().unwrap_or(self.global_mode)
                    }
                }
            })
            .collect()
    }
}
