use std::path::{Path, PathBuf};
use std::sync::Arc;

use inker_core::eval::{
    load_aae_corpus, load_snli, parse_annotations, run_structure_eval, run_validity_eval, sample, AaeError,
    EvalError, NliLabel, NliPair, RelationKind,
};
use inker_core::gateway::{load_rules, Gateway, MockProvider, MockResponse, MockRule, ModelConfig, PromptKind};
use inker_core::pipeline::{Pipeline, PipelineSettings};
use serde_json::json;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn pipeline(provider: MockProvider) -> Pipeline {
    Pipeline::new(
        Arc::new(Gateway::new(Arc::new(provider), ModelConfig::mock())),
        PipelineSettings::default(),
    )
}

fn mock_dir(name: &str) -> MockProvider {
    MockProvider::from_dir(&fixtures().join(name)).unwrap()
}

#[test]
fn corpus_loads_with_spans_checked() {
    let corpus = load_aae_corpus(&fixtures().join("aae")).unwrap();
    let ids: Vec<&str> = corpus.iter().map(|e| e.essay_id.as_str()).collect();
    assert_eq!(ids, ["essay001", "essay002", "essay003"]);
    let tourism = &corpus[1];
    assert_eq!(tourism.components.len(), 6);
    assert_eq!(tourism.relations.len(), 3);
    assert_eq!(tourism.relations[1].relation, RelationKind::Attacks);
    assert_eq!(tourism.supports().count(), 2);
    assert_eq!(tourism.attributes.len(), 2);
    for essay in &corpus {
        let chars: Vec<char> = essay.text.chars().collect();
        for c in &essay.components {
            assert_eq!(chars[c.start..c.end].iter().collect::<String>(), c.text);
        }
    }
}

#[test]
fn malformed_lines_are_rejected() {
    let text = "Alpha beta. Gamma delta.";
    let cases = [
        ("T1 MajorClaim 0 11 Alpha beta.", 1),
        ("T1\tMajorClaim zero 11\tAlpha beta.", 1),
        ("T1\tThesis 0 11\tAlpha beta.", 1),
        ("T1\tMajorClaim 0 11\tAlpha beta.\nR1\tsupports T1 T1", 2),
        ("T1\tMajorClaim 0 11\tAlpha beta.\nR1\trebuts Arg1:T1 Arg2:T1", 2),
        ("T1\tMajorClaim 0 11\tAlpha beta.\nT1\tClaim 12 24\tGamma delta.", 2),
        ("T1\tMajorClaim 0 11\tAlpha beta.\nE1\tEvent T1", 2),
        ("T1\tMajorClaim 0 11\tAlpha beta.\nA1\tStance T7 For", 2),
    ];
    for (ann, line) in cases {
        match parse_annotations("x", text, ann, "x.ann") {
            Err(AaeError::Parse { line: l, file, .. }) => {
                assert_eq!((l, file.as_str()), (line, "x.ann"), "{ann:?}")
            }
            other => panic!("{ann:?}: {other:?}"),
        }
    }
    let shifted = "T1\tMajorClaim 1 12\tAlpha beta.";
    assert!(matches!(
        parse_annotations("x", text, shifted, "x.ann"),
        Err(AaeError::SpanMismatch { .. })
    ));
}

#[test]
fn snli_fixture_counts() {
    let set = load_snli(&fixtures().join("snli.jsonl")).unwrap();
    assert_eq!(set.pairs.len(), 8);
    assert_eq!(set.skipped, 2);
}

#[tokio::test]
async fn perfect_structure_outputs_score_one() {
    let corpus = load_aae_corpus(&fixtures().join("aae")).unwrap();
    let report = run_structure_eval(&pipeline(mock_dir("aae-mock")), &corpus, 3, 42, "aae fixture")
        .await
        .unwrap();
    assert_eq!(report.main_claim_accuracy, Some(1.0));
    assert_eq!(report.relation_overlap, Some(1.0));
    assert!(report.relation_precision.unwrap() < 1.0);
    assert!(report.failures.is_empty());
    assert_eq!(report.per_item.len(), 3);
    assert!(report.check_invariants().is_empty());
    assert!(report.table().contains("main-claim accuracy"));
}

#[tokio::test]
async fn failed_item_is_excluded_and_counted() {
    let corpus = load_aae_corpus(&fixtures().join("aae")).unwrap();
    let mut rules = vec![MockRule::new(
        PromptKind::Structure,
        &["Museums should not charge entry"],
        vec![MockResponse::text("I cannot produce JSON today.")],
    )];
    for name in ["essay001", "essay002"] {
        rules.extend(load_rules(&fixtures().join(format!("aae-mock/{name}.json"))).unwrap());
    }
    let report = run_structure_eval(&pipeline(MockProvider::from_rules(rules).unwrap()), &corpus, 3, 1, "aae")
        .await
        .unwrap();
    assert_eq!(report.per_item.len(), 2);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].item_id, "essay003");
    assert!(report.check_invariants().is_empty());
}

#[tokio::test]
async fn every_item_failing_aborts() {
    let corpus = load_aae_corpus(&fixtures().join("aae")).unwrap();
    let provider =
        MockProvider::from_rules(vec![MockRule::new(PromptKind::Structure, &[], vec![MockResponse::text("no")])])
            .unwrap();
    let err = run_structure_eval(&pipeline(provider), &corpus, 2, 1, "aae").await.unwrap_err();
    assert_eq!(err, EvalError::AllFailed(2));
}

#[tokio::test]
async fn structure_reports_are_reproducible() {
    let corpus = load_aae_corpus(&fixtures().join("aae")).unwrap();
    let a = run_structure_eval(&pipeline(mock_dir("aae-mock")), &corpus, 2, 9, "aae").await.unwrap();
    let b = run_structure_eval(&pipeline(mock_dir("aae-mock")), &corpus, 2, 9, "aae").await.unwrap();
    assert_ne!(a.run_id, b.run_id);
    assert_eq!(a.canonical_json(), b.canonical_json());
    let err = run_structure_eval(&pipeline(mock_dir("aae-mock")), &corpus, 4, 9, "aae").await.unwrap_err();
    assert_eq!(err, EvalError::SampleTooLarge { n: 4, available: 3 });
}

#[tokio::test]
async fn mirrored_verdicts_score_one() {
    let set = load_snli(&fixtures().join("snli.jsonl")).unwrap();
    let report = run_validity_eval(&pipeline(mock_dir("snli-mock")), &set.pairs, 7, 5, "snli fixture")
        .await
        .unwrap();
    assert_eq!(report.validity_accuracy, Some(1.0));
    assert_eq!(report.excluded_neutral, Some(1));
    assert_eq!(report.per_item.len(), 7);
    let again = run_validity_eval(&pipeline(mock_dir("snli-mock")), &set.pairs, 7, 5, "snli fixture")
        .await
        .unwrap();
    assert_eq!(report.canonical_json(), again.canonical_json());
}

#[tokio::test]
async fn always_valid_on_balanced_pairs_scores_half() {
    let pairs: Vec<NliPair> = (0..10)
        .map(|i| NliPair {
            id: format!("b{i}"),
            premise: format!("Premise number {i}."),
            hypothesis: format!("Hypothesis number {i}."),
            gold_label: if i % 2 == 0 { NliLabel::Entailment } else { NliLabel::Contradiction },
        })
        .collect();
    let verdict = json!({"claim": "c", "evidence": ["e"], "evaluation": {"rationale": "r",
        "strength": "valid", "rationale_short": "s", "requirements": "none", "label": "none", "label_long": "none"}});
    let provider =
        MockProvider::from_rules(vec![MockRule::new(PromptKind::Validity, &[], vec![MockResponse::json(verdict)])])
            .unwrap();
    let report = run_validity_eval(&pipeline(provider), &pairs, 10, 3, "balanced").await.unwrap();
    let expected = pairs.iter().filter(|p| p.gold_label == NliLabel::Entailment).count() as f64 / 10.0;
    assert_eq!(report.validity_accuracy, Some(expected));
    assert_eq!(expected, 0.5);
}

#[test]
fn sample_rejects_oversize() {
    assert_eq!(
        sample(&[1, 2, 3], 4, 0),
        Err(EvalError::SampleTooLarge { n: 4, available: 3 })
    );
}
