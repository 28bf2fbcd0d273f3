use std::collections::BTreeSet;

use inker_core::anchor::{edit_distance, similarity, EssayText, MatchKind};
use inker_core::eval::metrics;
use inker_core::eval::{latency_stats, main_claim_accuracy, relation_overlap, validity_accuracy, NliLabel};
use inker_core::evaluation::Strength;
use inker_core::graph::{parse_analysis, trace_to_axioms, validate_graph, ArgumentAnalysis, QuoteId, SupportRelation, Violation};
use inker_testkit::{fixtures, oracle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn edit_distance_matches_table(a in "[abc]{0,12}", b in "[abc]{0,12}") {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        prop_assert_eq!(edit_distance(&a, &b), oracle::edit_distance(&a, &b));
    }

    #[test]
    fn anchoring_matches_exhaustive_search(seed in any::<u64>(), edits in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let essay = fixtures::essay(&mut rng, 12);
        let (s, e) = fixtures::substring_span(&mut rng, &essay, 4, 16);
        let quote = fixtures::perturb(&mut rng, &fixtures::slice(&essay, s, e), edits);
        let threshold = [0.6, 0.8, 0.9][rng.random_range(0..3)];
        let got = EssayText::new(&essay).anchor(&quote, threshold).ok();
        let want = oracle::anchor(&essay, &quote, threshold);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                prop_assert_eq!((g.start, g.end), (w.start, w.end));
                prop_assert_eq!(g.match_kind == MatchKind::Exact, w.exact);
                prop_assert_eq!(g.similarity, w.similarity(quote.chars().count()));
            }
            (g, w) => prop_assert!(false, "{:?} vs {:?} for {:?} in {:?}", g, w, quote, essay),
        }
    }

    #[test]
    fn exact_substrings_anchor_leftmost(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let essay = fixtures::essay(&mut rng, 30);
        let (s, e) = fixtures::substring_span(&mut rng, &essay, 1, 40);
        let quote = fixtures::slice(&essay, s, e);
        let m = EssayText::new(&essay).anchor(&quote, 0.8).unwrap();
        let leftmost = essay[..essay.find(&quote).unwrap()].chars().count();
        prop_assert_eq!((m.start, m.match_kind, m.similarity), (leftmost, MatchKind::Exact, 1.0));
        prop_assert_eq!(fixtures::slice(&essay, m.start, m.end), quote);
    }

    #[test]
    fn metrics_match_oracles(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = fixtures::gold(&mut rng);
        let (analysis, anchors) = fixtures::prediction(&mut rng, &gold);
        prop_assert_eq!(
            relation_overlap(&analysis, &anchors, &gold).recall,
            oracle::relation_overlap(&analysis, &anchors, &gold)
        );
        for span in anchors.values() {
            let got = metrics::best_component((span.start, span.end), &gold).map(|m| m.component_id);
            prop_assert_eq!(got, oracle::match_span((span.start, span.end), &gold));
            let (i, u) = metrics::overlap_counts((span.start, span.end), (gold.components[0].start, gold.components[0].end));
            prop_assert_eq!((i, u), oracle::overlap_by_positions((span.start, span.end), (gold.components[0].start, gold.components[0].end)));
        }
        let runs = vec![(anchors.get(&QuoteId::CLAIM).copied(), &gold)];
        prop_assert_eq!(main_claim_accuracy(&runs), oracle::main_claim_accuracy(&runs));
    }

    #[test]
    fn overlap_is_one_iff_gold_is_covered(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = fixtures::gold(&mut rng);
        let (analysis, anchors) = fixtures::prediction(&mut rng, &gold);
        let score = relation_overlap(&analysis, &anchors, &gold);
        prop_assert!((0.0..=1.0).contains(&score.recall));
        let pred = metrics::predicted_edges(&analysis, &anchors, &gold);
        let covered = metrics::gold_edges(&gold).is_subset(&pred);
        prop_assert_eq!(score.recall == 1.0, covered);
    }

    #[test]
    fn validity_and_latency_match_oracles(
        verdicts in prop::collection::vec((any::<bool>(), 0u8..3), 0..40),
        latencies in prop::collection::vec(0.0f64..30.0, 1..40),
    ) {
        let verdicts: Vec<(Strength, NliLabel)> = verdicts
            .into_iter()
            .map(|(v, l)| (
                if v { Strength::Valid } else { Strength::Invalid },
                [NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral][l as usize],
            ))
            .collect();
        prop_assert_eq!(validity_accuracy(&verdicts), oracle::validity_accuracy(&verdicts));
        let (mean, sd) = latency_stats(&latencies).unwrap();
        prop_assert_eq!(Some((mean, sd)), oracle::latency_stats(&latencies));
        prop_assert!(sd >= 0.0);
    }

    #[test]
    fn cycle_detection_matches_path_search(edges in prop::collection::vec((1u32..6, 0u32..6, 0u32..6), 0..7)) {
        let relations: Vec<SupportRelation> = edges
            .iter()
            .filter(|(a, _, t)| a != t)
            .map(|(a, b, t)| if *b == 0 || b == a || b == t { SupportRelation::independent(*a, *t) } else { SupportRelation::joined(&[*a, *b], *t) })
            .collect();
        let analysis = ArgumentAnalysis {
            claim_content: "c".into(),
            claim_quote: "q".into(),
            quotes: (1..6).map(|i| (QuoteId(i), format!("q{i}"))).collect(),
            relations,
        };
        let flagged = validate_graph(&analysis).iter().any(|v| matches!(v, Violation::CycleDetected { .. }));
        prop_assert_eq!(flagged, oracle::has_cycle(&analysis));
        if !flagged {
            prop_assert!(trace_to_axioms(&analysis, QuoteId::CLAIM).is_ok());
        }
    }

    #[test]
    fn analysis_json_round_trips(edges in prop::collection::vec((1u32..6, 0u32..6), 0..6)) {
        let relations: BTreeSet<SupportRelation> = edges
            .iter()
            .filter(|(a, t)| a != t && (*t == 0 || a > t))
            .map(|(a, t)| SupportRelation::independent(*a, *t))
            .collect();
        let analysis = ArgumentAnalysis {
            claim_content: "c".into(),
            claim_quote: "main".into(),
            quotes: (1..6).map(|i| (QuoteId(i), format!("quote {i}"))).collect(),
            relations: relations.into_iter().collect(),
        };
        let back = parse_analysis(&analysis.to_json()).unwrap();
        prop_assert_eq!(back.analysis, analysis);
    }
}

#[test]
fn similarity_formula() {
    assert_eq!(similarity(0, 10, 10), 1.0);
    assert_eq!(similarity(2, 10, 8), 0.8);
    assert_eq!(similarity(3, 8, 12), 0.75);
}
