use std::path::{Path, PathBuf};
use std::sync::Arc;

use inker_core::anchor::EssayText;
use inker_core::gateway::{load_rules, Gateway, MockProvider, MockResponse, MockRule, ModelConfig, PromptKind};
use inker_core::pipeline::{Pipeline, PipelineResult, PipelineSettings};
use inker_core::socratic::{
    SessionError, SessionState, SocraticEngine, StepState, CLOSING_MESSAGE, MAX_MESSAGE_CHARS,
    NO_FEEDBACK_MESSAGE,
};
use serde_json::json;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn gateway(provider: MockProvider) -> Arc<Gateway> {
    Arc::new(Gateway::new(Arc::new(provider), ModelConfig::mock()))
}

async fn analysed(name: &str) -> PipelineResult {
    let text = std::fs::read_to_string(fixtures().join(format!("essays/{name}.txt"))).unwrap();
    let provider = MockProvider::from_dir(&fixtures().join("mock")).unwrap();
    Pipeline::new(gateway(provider), PipelineSettings::default())
        .run(&text)
        .await
        .unwrap()
}

fn session(result: &PipelineResult) -> SessionState {
    SessionState::new("s1", "e1", "a1", result.essay.clone(), result.evaluated.clone(), result.plan.clone())
}

fn engine() -> SocraticEngine {
    SocraticEngine::new(gateway(MockProvider::from_dir(&fixtures().join("mock")).unwrap()))
}

fn ok(state: &SessionState) {
    assert_eq!(state.check_invariants(), Vec::<String>::new());
}

#[tokio::test]
async fn scripted_two_step_conversation() {
    let result = analysed("space-exploration").await;
    let engine = engine();
    let mut state = session(&result);
    assert_eq!(state.step_states[&1], StepState::Active);
    assert_eq!(state.step_states[&2], StepState::Pending);

    engine.start(&mut state).await.unwrap();
    ok(&state);
    // the opening highlight is the step's own quote, anchored independently
    let step1 = result.plan.step(1).unwrap();
    let expected = EssayText::new(&result.essay).anchor(&step1.target_text, 0.8).unwrap();
    let focus = state.current_focus().unwrap();
    assert_eq!((focus.start, focus.end), (expected.start, expected.end));
    assert_eq!(focus, step1.anchor.unwrap());

    let out = engine.user_message(&mut state, "Why does that sentence matter?").await.unwrap();
    ok(&state);
    assert!(out.comment.is_none());
    assert_eq!(out.progress, (0, 2));
    assert_eq!(state.active_step(), Some(1));

    let out = engine
        .user_message(&mut state, "Other nations exploring does not mean we must. I need a reason for today.")
        .await
        .unwrap();
    ok(&state);
    let comment = out.comment.unwrap();
    assert_eq!(comment.step_number, 1);
    assert_eq!(comment.anchored, step1.anchor.unwrap());
    assert!(comment.intention.starts_with("Replace the appeal"));
    assert_eq!(out.progress, (1, 2));
    assert_eq!(out.turns.len(), 2, "resolution reply plus focusing turn for step 2");
    let step2 = result.plan.step(2).unwrap();
    assert_eq!(state.current_focus(), step2.anchor);

    let out = engine
        .user_message(&mut state, "I attacked the critics instead of their argument about hospitals.")
        .await
        .unwrap();
    ok(&state);
    assert!(state.finished);
    assert_eq!(out.progress, (2, 2));
    assert_eq!(out.turns.last().unwrap().text, CLOSING_MESSAGE);
    assert_eq!(state.current_focus(), None);
    assert_eq!(state.comments.len(), 2);

    let err = engine.user_message(&mut state, "anything else?").await.unwrap_err();
    assert_eq!(err, SessionError::Finished);
}

#[tokio::test]
async fn empty_plan_session_is_finished() {
    let result = analysed("four-day-week").await;
    let mut state = session(&result);
    assert!(state.finished);
    let turns = engine().start(&mut state).await.unwrap();
    assert_eq!(turns[0].text, NO_FEEDBACK_MESSAGE);
    assert_eq!(state.progress(), (0, 0));
}

#[tokio::test]
async fn skip_moves_on_without_comment() {
    let result = analysed("space-exploration").await;
    let engine = engine();
    let mut state = session(&result);
    engine.start(&mut state).await.unwrap();
    engine.skip(&mut state).await.unwrap();
    ok(&state);
    assert_eq!(state.step_states[&1], StepState::Skipped);
    assert_eq!(state.active_step(), Some(2));
    assert!(state.comments.is_empty());
    engine.skip(&mut state).await.unwrap();
    assert!(state.finished);
    assert_eq!(state.progress(), (0, 2));
}

fn reply(message: &str, sentence: &str, resolved: bool) -> MockResponse {
    MockResponse::json(json!({"messageToUser": message, "sentenceToUser": sentence, "stepResolved": resolved}))
}

#[tokio::test]
async fn long_turns_are_truncated_and_bad_quotes_fall_back() {
    let result = analysed("car-free-centres").await;
    let long = "Why? ".repeat(120);
    let provider = MockProvider::from_rules(vec![MockRule::new(
        PromptKind::Socratic,
        &[],
        vec![reply(&long, "A sentence that is nowhere in the essay at all.", false)],
    )])
    .unwrap();
    let engine = SocraticEngine::new(gateway(provider));
    let mut state = session(&result);
    engine.start(&mut state).await.unwrap();
    let turn = state.transcript.last().unwrap();
    assert!(turn.text.chars().count() <= MAX_MESSAGE_CHARS);
    assert_eq!(turn.focus, result.plan.steps[0].anchor);
    assert!(state.warnings.iter().any(|w| w.contains("truncated")));
    assert!(state.warnings.iter().any(|w| w.contains("falling back")));
}

#[tokio::test]
async fn resolution_without_writer_turn_is_ignored() {
    let result = analysed("car-free-centres").await;
    let target = result.plan.steps[0].target_text.clone();
    let provider =
        MockProvider::from_rules(vec![MockRule::new(PromptKind::Socratic, &[], vec![reply("Done!", &target, true)])])
            .unwrap();
    let engine = SocraticEngine::new(gateway(provider));
    let mut state = session(&result);
    engine.start(&mut state).await.unwrap();
    assert!(state.comments.is_empty());
    assert_eq!(state.active_step(), Some(1));
    let out = engine.user_message(&mut state, "It only shows one person.").await.unwrap();
    assert!(out.comment.is_some());
    assert!(state.finished);
}

#[tokio::test]
async fn failed_turn_leaves_state_unchanged() {
    let result = analysed("car-free-centres").await;
    let mut rules = load_rules(&fixtures().join("mock/car-free-centres.json")).unwrap();
    rules.insert(
        0,
        MockRule::new(PromptKind::Socratic, &["please fail"], vec![MockResponse::error(401, "bad key")]),
    );
    let engine = SocraticEngine::new(gateway(MockProvider::from_rules(rules).unwrap()));
    let mut state = session(&result);
    engine.start(&mut state).await.unwrap();
    let before = state.clone();
    let err = engine.user_message(&mut state, "please fail").await.unwrap_err();
    assert!(matches!(err, SessionError::Degraded(_)));
    assert_eq!(state, before);
}

#[tokio::test]
async fn opening_failure_degrades_the_session() {
    let result = analysed("car-free-centres").await;
    let provider = MockProvider::from_rules(vec![MockRule::new(
        PromptKind::Socratic,
        &[],
        vec![MockResponse::error(401, "no key"), reply("Hello", "My neighbour sold his car", false)],
    )])
    .unwrap();
    let engine = SocraticEngine::new(gateway(provider));
    let mut state = session(&result);
    assert!(engine.start(&mut state).await.is_err());
    assert!(state.degraded.is_some());
    assert!(state.transcript.is_empty());
    engine.resume(&mut state).await.unwrap();
    assert!(state.degraded.is_none());
    assert!(state.current_focus().is_some());
}
