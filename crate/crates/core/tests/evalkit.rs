use std::collections::BTreeMap;

use audioqa_core::answer::AnswerVocab;
use audioqa_core::clips::{generate_split, SplitConfig, SplitName};
use audioqa_core::evalkit::*;
use audioqa_core::events::{EventLibrary, Taxonomy};
use audioqa_core::nn::Hyperparams;
use audioqa_core::questions::*;
use proptest::prelude::*;

fn vocab() -> AnswerVocab {
    let ids: Vec<String> = Taxonomy::builtin().types.iter().map(|t| t.id.clone()).collect();
    AnswerVocab::new(&ids)
}

fn item(id: usize, t: &str, skill: Skill, label: usize) -> EvalItem {
    EvalItem {
        question_id: format!("q{id}"),
        template_id: t.into(),
        skill,
        tokens: vec![],
        label,
    }
}

#[test]
fn perfect_predictions() {
    let v = vocab();
    let gold: Vec<EvalItem> = (0..40).map(|i| item(i, "t", Skill::ALL[i % 5], (i * 7) % 30)).collect();
    let pred: Vec<usize> = gold.iter().map(|g| g.label).collect();
    let m = evaluate(&pred, &gold, &v).unwrap();
    assert_eq!(m.overall.accuracy, 1.0);
    assert!(m.per_skill.values().all(|t| t.accuracy == 1.0));
    for (r, row) in m.confusion.iter().enumerate() {
        let present = gold.iter().any(|g| g.label == r);
        for (c, &x) in row.iter().enumerate() {
            assert_eq!(x, if present && r == c { 1.0 } else { 0.0 });
        }
    }
    assert_eq!(m.labels.len(), 36);
}

#[test]
fn always_yes() {
    let v = vocab();
    let yes = v.index_of(&audioqa_core::Answer::Yes).unwrap();
    let no = v.index_of(&audioqa_core::Answer::No).unwrap();
    let gold = vec![
        item(0, "e", Skill::Exist, yes),
        item(1, "e", Skill::Exist, no),
        item(2, "e", Skill::Exist, no),
        item(3, "c", Skill::Compare, yes),
        item(4, "q", Skill::Query, 5),
        item(5, "n", Skill::Count, 30),
    ];
    let m = evaluate(&vec![yes; gold.len()], &gold, &v).unwrap();
    assert!((m.per_skill["exist"].accuracy - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(m.per_skill["compare"].accuracy, 1.0);
    assert_eq!(m.per_skill["query"].accuracy, 0.0);
    assert_eq!(m.per_skill["count"].accuracy, 0.0);
    assert!(!m.per_skill.contains_key("compare_integer"));
}

#[test]
fn length_mismatch_is_an_error() {
    let gold = vec![item(0, "t", Skill::Exist, 0)];
    assert!(evaluate(&[0, 1], &gold, &vocab()).is_err());
}

#[test]
fn report_files() {
    let gold = vec![item(0, "b", Skill::Exist, 0), item(1, "a", Skill::Query, 3)];
    let m = evaluate(&[0, 2], &gold, &vocab()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    m.write(dir.path(), "metrics").unwrap();
    let tsv = std::fs::read_to_string(dir.path().join("metrics.tsv")).unwrap();
    assert_eq!(tsv, "template_id\tcorrect\ttotal\taccuracy\na\t0\t1\t0.000000\nb\t1\t1\t1.000000\n");
    let back: Metrics = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(back, m);
}

proptest! {
    #[test]
    fn aggregate_invariants(rows in prop::collection::vec((0usize..5, 0usize..6, 0usize..36, 0usize..36), 1..200)) {
        let gold: Vec<EvalItem> = rows.iter().enumerate()
            .map(|(i, &(s, t, g, _))| item(i, &format!("t{t}"), Skill::ALL[s], g)).collect();
        let pred: Vec<usize> = rows.iter().map(|r| r.3).collect();
        let m = evaluate(&pred, &gold, &vocab()).unwrap();
        let weighted: f64 = m.per_skill.values().map(|t| t.accuracy * t.total as f64).sum::<f64>() / gold.len() as f64;
        prop_assert!((weighted - m.overall.accuracy).abs() < 1e-12);
        for (r, row) in m.confusion.iter().enumerate() {
            let s: f64 = row.iter().sum();
            let present = gold.iter().any(|g| g.label == r);
            let ok = if present { (s - 1.0).abs() < 1e-12 } else { s == 0.0 };
            prop_assert!(ok, "row {} sums to {}", r, s);
        }
    }

    #[test]
    fn mode_per_template_dominates_on_fit_split(rows in prop::collection::vec((0usize..6, 0usize..36), 1..300)) {
        let items: Vec<EvalItem> = rows.iter().enumerate()
            .map(|(i, &(t, g))| item(i, &format!("t{t}"), Skill::Query, g)).collect();
        let b = Baselines::fit(&items, BTreeMap::new(), 36);
        let acc = |k| evaluate(&b.predict(k, &items, 0), &items, &vocab()).unwrap().overall.accuracy;
        prop_assert!(acc(BaselineKind::ModePerTemplate) >= acc(BaselineKind::Mode));
    }
}

/// Baselines on questions generated from a small synthetic corpus.
#[test]
fn baselines_on_generated_questions() {
    let v = vocab();
    let engine = QuestionEngine::new(Catalog::builtin(), Taxonomy::builtin().types, SynonymTable::builtin());
    let lib = EventLibrary::synthetic(&Taxonomy::builtin().with_duration_scale(0.05), 4, 16000, 2).unwrap();
    let cfg = SplitConfig {
        n_train: 600,
        n_val: 10,
        n_test: 400,
        master_seed: 21,
        clip: Default::default(),
    };
    let splits = generate_split(&cfg, &lib).unwrap();
    let gen = GenerationConfig::default();
    let qs = |name: SplitName| {
        let s = splits.iter().find(|s| s.name == name).unwrap();
        let (q, _) = engine.generate_split(name, &s.annotations(), &gen).unwrap();
        EvalItem::from_questions(&q, &v).unwrap()
    };
    let (train, test) = (qs(SplitName::Train), qs(SplitName::Test));
    let b = Baselines::fit(&train, template_supports(&engine, &v), v.len());
    let acc = |p: &[usize], d: &[EvalItem]| evaluate(p, d, &v).unwrap().overall.accuracy;

    // Mode scores exactly the test frequency of the training mode.
    let freq = test.iter().filter(|t| t.label == b.global_mode).count() as f64 / test.len() as f64;
    assert_eq!(acc(&b.predict(BaselineKind::Mode, &test, 0), &test), freq);

    // Random within three binomial standard deviations of 1/36.
    let n = test.len() as f64;
    let p = 1.0 / 36.0;
    let r = acc(&b.predict(BaselineKind::Random, &test, 3), &test);
    assert!((r - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt(), "{r}");

    let rpt = acc(&b.predict(BaselineKind::RandomPerTemplate, &test, 3), &test);
    assert!(rpt > r, "{rpt} vs {r}");

    let mpt_train = acc(&b.predict(BaselineKind::ModePerTemplate, &train, 0), &train);
    assert!(mpt_train >= acc(&b.predict(BaselineKind::Mode, &train, 0), &train));

    let hp = Hyperparams {
        learning_rate: 1e-2,
        epochs: 400,
        ..Hyperparams::default()
    };
    let (toh, fit) = LogisticModel::train(FeatureKind::TemplateOneHot, &train, v.len(), &hp, 1e-5, 5).unwrap();
    let toh_train = acc(&toh.predict(&train), &train);
    assert!((toh_train - mpt_train).abs() <= 0.005, "{toh_train} vs {mpt_train} after {} epochs", fit.epochs);

    let (bow, _) = LogisticModel::train(FeatureKind::BagOfWords, &train, v.len(), &hp, 1e-5, 5).unwrap();
    let toh_test = acc(&toh.predict(&test), &test);
    let bow_test = acc(&bow.predict(&test), &test);
    // measured on this corpus rather than guaranteed
    assert!(bow_test >= toh_test - 0.005, "{bow_test} vs {toh_test}");
    eprintln!(
        "train {} test {}: random {r:.4} rpt {rpt:.4} mode {freq:.4} toh {toh_test:.4} bow {bow_test:.4} ({} epochs)",
        train.len(),
        test.len(),
        fit.epochs
    );
}
