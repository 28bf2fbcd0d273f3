//! Stored payloads re-parse into equal values.

use std::sync::Arc;

use chrono::{TimeZone, Utc};
use inker_core::anchor::{AnchoredSpan, MatchKind};
use inker_core::evaluation::EvaluatedAnalysis;
use inker_core::graph::QuoteId;
use inker_core::plan::{Plan, PlanStep};
use inker_core::socratic::{AssistantReply, SessionState};
use inker_server::records::EssayRecord;
use inker_server::store::{FileStore, MemoryStore, RecordKind, Store};
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone)]
enum Op {
    User(String),
    Assistant { text: String, resolved: bool, intention: Option<String>, span: (usize, usize, f64) },
    Skip,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        "\\PC{0,20}".prop_map(Op::User),
        (
            "\\PC{0,30}",
            any::<bool>(),
            proptest::option::of("\\PC{0,15}"),
            (0usize..50, 1usize..20, 0.0f64..=1.0)
        )
            .prop_map(|(text, resolved, intention, span)| Op::Assistant { text, resolved, intention, span }),
        Just(Op::Skip),
    ]
}

fn plan(steps: usize) -> Plan {
    Plan {
        steps: (1..=steps as u32)
            .map(|n| PlanStep {
                step_number: n,
                description: format!("step {n}"),
                target_text: format!("quote {n}"),
                issue: "issue".into(),
                relation: Some(n as usize - 1),
                anchor: None,
            })
            .collect(),
    }
}

fn session(steps: usize, ops: &[Op]) -> SessionState {
    let mut state = SessionState::new("s-1", "e-1", "a-1", "An essay.", EvaluatedAnalysis::default(), plan(steps));
    for op in ops {
        match op {
            Op::User(text) => {
                let _ = state.record_user(text);
            }
            Op::Assistant { text, resolved, intention, span } => {
                let reply = AssistantReply {
                    message_to_user: text.clone(),
                    sentence_to_user: text.clone(),
                    step_resolved: *resolved,
                    intention: intention.clone(),
                    suggestion: None,
                };
                let focus = AnchoredSpan {
                    quote_id: QuoteId(1),
                    start: span.0,
                    end: span.0 + span.1,
                    match_kind: if span.2 == 1.0 { MatchKind::Exact } else { MatchKind::Fuzzy },
                    similarity: span.2,
                };
                state.record_assistant(reply, Some(focus));
            }
            Op::Skip => {
                let _ = state.skip_active();
            }
        }
    }
    state
}

fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(
    store: &dyn Store,
    kind: RecordKind,
    id: &str,
    value: &T,
) {
    let written = store.put(kind, id, serde_json::to_value(value).unwrap()).unwrap();
    let read = store.get(kind, id).unwrap().unwrap();
    assert_eq!(read, written);
    let back: T = serde_json::from_value(read.payload).unwrap();
    assert_eq!(&back, value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sessions_round_trip(steps in 0usize..4, ops in proptest::collection::vec(op(), 0..12)) {
        let state = session(steps, &ops);
        let dir = tempfile::tempdir().unwrap();
        let stores: [Arc<dyn Store>; 2] = [Arc::new(MemoryStore::new()), Arc::new(FileStore::open(dir.path()).unwrap())];
        for store in stores {
            round_trip(store.as_ref(), RecordKind::Session, "s-1", &state);
        }
    }

    #[test]
    fn essays_round_trip(text in "\\PC{1,200}", secs in 0i64..4_000_000_000, latest in proptest::option::of("[a-z0-9-]{1,20}")) {
        let record = EssayRecord {
            essay_id: "e-1".into(),
            text,
            created_at: Utc.timestamp_opt(secs, 0).unwrap(),
            latest_analysis_id: latest,
        };
        let dir = tempfile::tempdir().unwrap();
        round_trip(&FileStore::open(dir.path()).unwrap(), RecordKind::Essay, "e-1", &record);
    }

    #[test]
    fn latest_write_wins(values in proptest::collection::vec(any::<i64>(), 1..8)) {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        for v in &values {
            store.put(RecordKind::Analysis, "a", serde_json::json!(v)).unwrap();
        }
        prop_assert_eq!(store.get(RecordKind::Analysis, "a").unwrap().unwrap().payload, serde_json::json!(values.last().unwrap()));
        prop_assert_eq!(store.list(RecordKind::Analysis).unwrap().len(), 1);
    }
}
