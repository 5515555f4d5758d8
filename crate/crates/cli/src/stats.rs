use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use audioqa_core::clips::SplitName;
use audioqa_core::questions::QuestionInstance;

use crate::config::RunConfig;
use crate::pipeline::{answer_vocab, engine, load_annotations, load_library, load_questions, Layout};

/// Rows keyed by `K` with one count column per split.
type Table<K> = BTreeMap<K, [usize; 3]>;

fn col(split: SplitName) -> usize {
    SplitName::ALL.iter().position(|&s| s == split).expect("known split")
}

fn render<K: std::fmt::Display>(key: &str, rows: impl IntoIterator<Item = (K, [usize; 3])>) -> String {
    let mut s = format!("{key}\ttrain\tval\ttest\n");
    for (k, c) in rows {
        let _ = writeln!(s, "{k}\t{}\t{}\t{}", c[0], c[1], c[2]);
    }
    s
}

fn write(dir: &Path, name: &str, text: String) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
}

/// Writes plot-ready tables under `stats/`: answer frequencies, question
/// lengths, clip durations and event counts, per-template counts and the
/// per-template answer histograms. Returns the table file names.
pub fn stats(cfg: &RunConfig) -> Result<Vec<String>> {
    let lib = load_library(cfg)?;
    let engine = engine(cfg, &lib)?;
    let answers = answer_vocab(&lib);
    let dir = Layout::new(&cfg.output).stats_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut by_answer = vec![[0usize; 3]; answers.len()];
    let mut lengths: Table<usize> = BTreeMap::new();
    let mut durations: Table<usize> = BTreeMap::new();
    let mut events: Table<usize> = BTreeMap::new();
    let mut templates: Table<String> = engine.catalog.templates.iter().map(|t| (t.template_id.clone(), [0; 3])).collect();
    let mut hist = String::from("split\ttemplate_id\tanswer\tcount\tshare\n");

    for split in SplitName::ALL {
        let c = col(split);
        for a in load_annotations(cfg, split)? {
            durations.entry(a.total_duration_s.floor() as usize).or_default()[c] += 1;
            events.entry(a.events.len()).or_default()[c] += 1;
        }
        let qs = load_questions(cfg, split)?;
        let mut per: BTreeMap<&str, Vec<&QuestionInstance>> = BTreeMap::new();
        for q in &qs {
            if let Some(i) = answers.index_of(&q.answer) {
                by_answer[i][c] += 1;
            }
            lengths.entry(q.text_tokens.len()).or_default()[c] += 1;
            templates.entry(q.template_id.clone()).or_default()[c] += 1;
            per.entry(&q.template_id).or_default().push(q);
        }
        for (t, list) in per {
            let support = engine.support_of(t).unwrap_or_default();
            for a in support {
                let n = list.iter().filter(|q| &q.answer == a).count();
                let _ = writeln!(hist, "{split}\t{t}\t{a}\t{n}\t{:.6}", n as f64 / list.len() as f64);
            }
        }
    }

    let tables = [
        ("answers.tsv", render("answer", answers.answers().iter().map(|a| a.token()).zip(by_answer))),
        ("question_lengths.tsv", render("tokens", lengths)),
        ("clip_durations.tsv", render("seconds", durations)),
        ("clip_events.tsv", render("events", events)),
        ("templates.tsv", render("template_id", templates)),
        ("template_answers.tsv", hist),
    ];
    let mut names = Vec::new();
    for (name, text) in tables {
        write(&dir, name, text)?;
        names.push(name.to_string());
    }
    Ok(names)
}
