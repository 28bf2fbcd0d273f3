//! Socratic review of a finished analysis: one plan step at a time, with a
//! comment marker recorded only once the writer has put the flaw into words.
//!
//! [`SessionState`] is a plain state machine with no I/O. [`SocraticEngine`]
//! drives it with model turns.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::anchor::{AnchoredSpan, EssayText, DEFAULT_THRESHOLD};
use crate::evaluation::EvaluatedAnalysis;
use crate::gateway::{Gateway, GatewayError, JsonRequest, Message, PromptKind};
use crate::graph::QuoteId;
use crate::plan::{Plan, PlanStep};
use crate::prompts;

pub const MAX_MESSAGE_CHARS: usize = 400;

pub const NO_FEEDBACK_MESSAGE: &str =
    "I have no feedback to provide on the reasoning in this essay. Nice work.";
pub const CLOSING_MESSAGE: &str =
    "That was the last point I wanted to discuss. I have no further feedback to provide.";

/// Kick-off messages sent to the model but not stored in the transcript.
const OPENING_CUE: &str = "I have finished my essay. Please start the review.";
const NEXT_STEP_CUE: &str = "Let us move on to the next point of the plan.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepState {
    Pending,
    Active,
    Resolved,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionPair {
    pub original: String,
    pub suggestion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Suggestion {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_quote: Option<SuggestionPair>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support_relations: Vec<SuggestionPair>,
}

/// A dialogue reply as the model returns it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AssistantReply {
    pub message_to_user: String,
    pub sentence_to_user: String,
    #[serde(default)]
    pub step_resolved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intention: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<Suggestion>,
}

impl AssistantReply {
    /// A reply that is not tied to any essay sentence.
    pub fn fixed(text: &str) -> Self {
        AssistantReply {
            message_to_user: text.to_string(),
            sentence_to_user: String::new(),
            step_resolved: false,
            intention: None,
            suggestion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Speaker,
    pub text: String,
    /// Plan step that was active when the turn was recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence: Option<String>,
    /// Highlighted span for assistant turns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<AnchoredSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<Suggestion>,
    #[serde(default)]
    pub step_resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentMarker {
    pub anchored: AnchoredSpan,
    /// The model's restatement of what the writer wants to change.
    pub intention: String,
    /// The writer's own words that resolved the step.
    pub user_text: String,
    pub step_number: u32,
    /// Transcript index of `user_text`.
    pub user_turn: usize,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("session is finished")]
    Finished,
    #[error("message is empty")]
    EmptyMessage,
    #[error("turn generation failed: {0}")]
    Degraded(GatewayError),
    #[error("reply is malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub essay_id: String,
    pub analysis_id: String,
    pub essay: String,
    pub evaluated: EvaluatedAnalysis,
    pub plan: Plan,
    pub step_states: BTreeMap<u32, StepState>,
    pub transcript: Vec<Turn>,
    pub comments: Vec<CommentMarker>,
    pub finished: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Set when the last turn generation failed; cleared by the next success.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<String>,
}

/// Result of recording an assistant turn.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transition {
    pub comment: Option<CommentMarker>,
    /// Step activated by this transition.
    pub activated: Option<u32>,
    pub finished: bool,
}

impl SessionState {
    pub fn new(
        session_id: impl Into<String>,
        essay_id: impl Into<String>,
        analysis_id: impl Into<String>,
        essay: impl Into<String>,
        evaluated: EvaluatedAnalysis,
        plan: Plan,
    ) -> Self {
        let step_states = plan
            .steps
            .iter()
            .map(|s| (s.step_number, StepState::Pending))
            .collect();
        let mut state = SessionState {
            session_id: session_id.into(),
            essay_id: essay_id.into(),
            analysis_id: analysis_id.into(),
            essay: essay.into(),
            evaluated,
            plan,
            step_states,
            transcript: Vec::new(),
            comments: Vec::new(),
            finished: false,
            warnings: Vec::new(),
            degraded: None,
        };
        state.activate_next();
        state
    }

    pub fn active_step(&self) -> Option<u32> {
        self.step_states
            .iter()
            .find(|(_, s)| **s == StepState::Active)
            .map(|(n, _)| *n)
    }

    fn active_plan_step(&self) -> Option<&PlanStep> {
        self.active_step().and_then(|n| self.plan.step(n))
    }

    /// (resolved, total)
    pub fn progress(&self) -> (usize, usize) {
        let resolved = self
            .step_states
            .values()
            .filter(|s| **s == StepState::Resolved)
            .count();
        (resolved, self.plan.len())
    }

    /// Most recent highlighted span of the active step.
    pub fn current_focus(&self) -> Option<AnchoredSpan> {
        let active = self.active_step()?;
        self.transcript
            .iter()
            .rev()
            .filter(|t| t.role == Speaker::Assistant && t.step == Some(active))
            .find_map(|t| t.focus)
    }

    /// Activates the lowest pending step, or finishes the session.
    fn activate_next(&mut self) -> Option<u32> {
        let next = self
            .step_states
            .iter()
            .find(|(_, s)| **s == StepState::Pending)
            .map(|(n, _)| *n);
        match next {
            Some(n) => {
                self.step_states.insert(n, StepState::Active);
            }
            None => self.finished = true,
        }
        next
    }

    pub fn record_user(&mut self, text: &str) -> Result<(), SessionError> {
        if self.finished {
            return Err(SessionError::Finished);
        }
        if text.trim().is_empty() {
            return Err(SessionError::EmptyMessage);
        }
        self.transcript.push(Turn {
            role: Speaker::User,
            text: text.to_string(),
            step: self.active_step(),
            sentence: None,
            focus: None,
            suggestion: None,
            step_resolved: false,
        });
        Ok(())
    }

    /// Index of the latest writer turn for the active step, if any.
    fn verbalization(&self) -> Option<usize> {
        let active = self.active_step()?;
        self.transcript
            .iter()
            .rposition(|t| t.role == Speaker::User && t.step == Some(active))
    }

    /// Appends an assistant turn. A resolution claim only counts when the
    /// writer has spoken during the active step.
    pub fn record_assistant(&mut self, reply: AssistantReply, focus: Option<AnchoredSpan>) -> Transition {
        let step = self.active_step();
        let mut resolved = reply.step_resolved && step.is_some();
        let user_turn = self.verbalization();
        if resolved && user_turn.is_none() {
            self.warnings
                .push("resolution reported before the writer said anything; ignored".into());
            resolved = false;
        }
        self.transcript.push(Turn {
            role: Speaker::Assistant,
            text: reply.message_to_user,
            step,
            sentence: (!reply.sentence_to_user.is_empty()).then_some(reply.sentence_to_user),
            focus,
            suggestion: reply.suggestion,
            step_resolved: resolved,
        });

        let mut transition = Transition::default();
        if let (true, Some(step), Some(user_turn)) = (resolved, step, user_turn) {
            let user_text = self.transcript[user_turn].text.clone();
            let anchored = self
                .plan
                .step(step)
                .and_then(|s| s.anchor)
                .or(focus)
                .unwrap_or(AnchoredSpan {
                    quote_id: QuoteId::CLAIM,
                    start: 0,
                    end: 0,
                    match_kind: crate::anchor::MatchKind::Exact,
                    similarity: 1.0,
                });
            let comment = CommentMarker {
                anchored,
                intention: reply
                    .intention
                    .filter(|i| !i.trim().is_empty())
                    .unwrap_or_else(|| user_text.clone()),
                user_text,
                step_number: step,
                user_turn,
                created_at: Utc::now(),
            };
            self.comments.push(comment.clone());
            self.step_states.insert(step, StepState::Resolved);
            transition.comment = Some(comment);
            transition.activated = self.activate_next();
            transition.finished = self.finished;
        }
        transition
    }

    /// Abandons the active step without a comment.
    pub fn skip_active(&mut self) -> Result<Option<u32>, SessionError> {
        let step = self.active_step().ok_or(SessionError::Finished)?;
        self.step_states.insert(step, StepState::Skipped);
        Ok(self.activate_next())
    }

    /// Broken invariants, empty when the state is sound.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let count = |wanted: StepState| self.step_states.values().filter(|s| **s == wanted).count();
        if count(StepState::Active) > 1 {
            problems.push("more than one active step".to_string());
        }
        let open = count(StepState::Active) + count(StepState::Pending);
        if self.finished != (open == 0) {
            problems.push(format!("finished={} with {open} open steps", self.finished));
        }
        if self.comments.len() != count(StepState::Resolved) {
            problems.push("comment count differs from resolved count".to_string());
        }
        for comment in &self.comments {
            if self.step_states.get(&comment.step_number) != Some(&StepState::Resolved) {
                problems.push(format!("comment for unresolved step {}", comment.step_number));
            }
            match self.transcript.get(comment.user_turn) {
                Some(t) if t.role == Speaker::User && t.step == Some(comment.step_number) => {}
                _ => problems.push(format!(
                    "comment for step {} without a writer turn",
                    comment.step_number
                )),
            }
        }
        let len = self.essay.chars().count();
        for span in self.transcript.iter().filter_map(|t| t.focus) {
            if span.start > span.end || span.end > len {
                problems.push(format!("focus {}..{} outside essay", span.start, span.end));
            }
        }
        problems
    }
}

/// Shortens `text` to at most `limit` characters.
pub fn truncate_chars(text: &str, limit: usize) -> String {
    if text.chars().count() <= limit || limit == 0 {
        return text.chars().take(limit).collect();
    }
    let mut keep: String = text.chars().take(limit - 1).collect();
    keep.truncate(keep.trim_end().len());
    keep.push('…');
    keep
}

/// What a writer message produced.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageOutcome {
    /// New assistant turns, in order.
    pub turns: Vec<Turn>,
    pub comment: Option<CommentMarker>,
    pub progress: (usize, usize),
    pub warnings: Vec<String>,
}

pub struct SocraticEngine {
    gateway: Arc<Gateway>,
    threshold: f64,
}

impl SocraticEngine {
    pub fn new(gateway: Arc<Gateway>) -> Self {
        Self {
            gateway,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    /// Produces the opening turn. On failure the session is kept, marked
    /// degraded, and the opening can be retried with [`Self::resume`].
    pub async fn start(&self, state: &mut SessionState) -> Result<Vec<Turn>, SessionError> {
        if state.finished {
            state.record_assistant(AssistantReply::fixed(NO_FEEDBACK_MESSAGE), None);
            return Ok(state.transcript.clone());
        }
        self.resume(state).await
    }

    /// Generates a focusing turn for the active step when the last turn is
    /// not an assistant turn for it.
    pub async fn resume(&self, state: &mut SessionState) -> Result<Vec<Turn>, SessionError> {
        let before = state.transcript.len();
        let cue = if state.transcript.is_empty() { OPENING_CUE } else { NEXT_STEP_CUE };
        match self.focus_turn(state, cue).await {
            Ok(()) => {
                state.degraded = None;
                Ok(state.transcript[before..].to_vec())
            }
            Err(err) => {
                state.degraded = Some(err.to_string());
                Err(err)
            }
        }
    }

    async fn focus_turn(&self, state: &mut SessionState, cue: &str) -> Result<(), SessionError> {
        let (reply, focus, warnings) = self.generate(state, Some(cue)).await?;
        state.warnings.extend(warnings);
        state.record_assistant(reply, Some(focus));
        Ok(())
    }

    /// Handles one writer message. The state changes only on success.
    pub async fn user_message(
        &self,
        state: &mut SessionState,
        text: &str,
    ) -> Result<MessageOutcome, SessionError> {
        let mut next = state.clone();
        next.record_user(text)?;
        let before = next.transcript.len();
        let mut warnings = Vec::new();

        let (reply, focus, w) = self.generate(&next, None).await?;
        warnings.extend(w);
        let transition = next.record_assistant(reply, Some(focus));

        if transition.comment.is_some() {
            if transition.finished {
                next.record_assistant(AssistantReply::fixed(CLOSING_MESSAGE), None);
            } else {
                let (reply, focus, w) = self.generate(&next, Some(NEXT_STEP_CUE)).await?;
                warnings.extend(w);
                next.record_assistant(reply, Some(focus));
            }
        }

        next.warnings.extend(warnings.iter().cloned());
        next.degraded = None;
        let outcome = MessageOutcome {
            turns: next.transcript[before..].to_vec(),
            comment: transition.comment,
            progress: next.progress(),
            warnings,
        };
        *state = next;
        Ok(outcome)
    }

    /// Skips the active step and focuses the next one.
    pub async fn skip(&self, state: &mut SessionState) -> Result<Vec<Turn>, SessionError> {
        let mut next = state.clone();
        next.skip_active()?;
        let before = next.transcript.len();
        if next.finished {
            next.record_assistant(AssistantReply::fixed(CLOSING_MESSAGE), None);
        } else {
            self.focus_turn(&mut next, NEXT_STEP_CUE).await?;
        }
        let turns = next.transcript[before..].to_vec();
        *state = next;
        Ok(turns)
    }

    fn conversation(state: &SessionState, cue: Option<&str>) -> Vec<Message> {
        let mut messages: Vec<Message> = Vec::new();
        for turn in &state.transcript {
            match turn.role {
                Speaker::User => messages.push(Message::user(turn.text.clone())),
                Speaker::Assistant => {
                    let echo = json!({
                        "messageToUser": turn.text,
                        "sentenceToUser": turn.sentence.clone().unwrap_or_default(),
                        "stepResolved": turn.step_resolved,
                    });
                    messages.push(Message::assistant(echo.to_string()));
                }
            }
        }
        if let Some(cue) = cue {
            messages.push(Message::user(cue));
        }
        if messages.is_empty() {
            messages.push(Message::user(OPENING_CUE));
        }
        messages
    }

    /// One model turn for the active step, with length and anchor repair.
    async fn generate(
        &self,
        state: &SessionState,
        cue: Option<&str>,
    ) -> Result<(AssistantReply, AnchoredSpan, Vec<String>), SessionError> {
        let step = state.active_plan_step().ok_or(SessionError::Finished)?.clone();
        let system = prompts::socratic_system(&state.evaluated, &state.plan, &step);
        let schema = prompts::schema(PromptKind::Socratic);
        let mut messages = Self::conversation(state, cue);
        let mut warnings = Vec::new();

        let record = self
            .gateway
            .complete_json(JsonRequest {
                kind: PromptKind::Socratic,
                system: Some(system.clone()),
                messages: messages.clone(),
                schema: schema.clone(),
            })
            .await
            .map_err(SessionError::Degraded)?;
        let mut reply = parse_reply(record.value())?;

        let essay = EssayText::new(&state.essay);
        let quote_id = step.anchor.map(|a| a.quote_id).unwrap_or(QuoteId::CLAIM);
        let mut focus = essay
            .anchor(&reply.sentence_to_user, self.threshold)
            .ok()
            .map(|m| m.for_quote(quote_id));

        if focus.is_none() {
            warnings.push(format!(
                "step {}: highlighted sentence not found in the essay, asked again",
                step.step_number
            ));
            messages.push(Message::assistant(record.raw_text.clone()));
            messages.push(Message::user(
                "The sentenceToUser field must be an exact quote from the essay. Answer again with an exact quote.",
            ));
            let retry = self
                .gateway
                .complete_json(JsonRequest {
                    kind: PromptKind::Socratic,
                    system: Some(system),
                    messages,
                    schema,
                })
                .await;
            if let Ok(retry) = retry {
                if let Ok(second) = parse_reply(retry.value()) {
                    focus = essay
                        .anchor(&second.sentence_to_user, self.threshold)
                        .ok()
                        .map(|m| m.for_quote(quote_id));
                    reply = second;
                }
            }
        }
        let focus = match (focus, step.anchor) {
            (Some(f), _) => f,
            (None, Some(anchor)) => {
                warnings.push(format!(
                    "step {}: falling back to the step's own quote for highlighting",
                    step.step_number
                ));
                reply.sentence_to_user = step.target_text.clone();
                anchor
            }
            (None, None) => {
                return Err(SessionError::Malformed(format!(
                    "step {} has no anchor and the reply quote cannot be found",
                    step.step_number
                )))
            }
        };

        if reply.message_to_user.chars().count() > MAX_MESSAGE_CHARS {
            warnings.push(format!(
                "step {}: message of {} characters truncated to {MAX_MESSAGE_CHARS}",
                step.step_number,
                reply.message_to_user.chars().count()
            ));
            reply.message_to_user = truncate_chars(&reply.message_to_user, MAX_MESSAGE_CHARS);
        }
        Ok((reply, focus, warnings))
    }
}

fn parse_reply(value: &Value) -> Result<AssistantReply, SessionError> {
    serde_json::from_value(value.clone()).map_err(|e| SessionError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::MatchKind;

    fn span(start: usize, end: usize) -> AnchoredSpan {
        AnchoredSpan {
            quote_id: QuoteId(1),
            start,
            end,
            match_kind: MatchKind::Exact,
            similarity: 1.0,
        }
    }

    fn plan(n: u32) -> Plan {
        Plan {
            steps: (1..=n)
                .map(|i| PlanStep {
                    step_number: i,
                    description: format!("d{i}"),
                    target_text: "abc".into(),
                    issue: "i".into(),
                    relation: Some(0),
                    anchor: Some(span(0, 3)),
                })
                .collect(),
        }
    }

    fn state(n: u32) -> SessionState {
        SessionState::new("s", "e", "a", "abc def", EvaluatedAnalysis::default(), plan(n))
    }

    fn resolved() -> AssistantReply {
        AssistantReply {
            step_resolved: true,
            intention: Some("fix it".into()),
            ..AssistantReply::fixed("ok")
        }
    }

    #[test]
    fn empty_plan_starts_finished() {
        let s = state(0);
        assert!(s.finished);
        assert_eq!(s.progress(), (0, 0));
        assert_eq!(s.current_focus(), None);
    }

    #[test]
    fn first_step_active() {
        let s = state(2);
        assert_eq!(s.step_states[&1], StepState::Active);
        assert_eq!(s.step_states[&2], StepState::Pending);
        assert_eq!(s.progress(), (0, 2));
    }

    #[test]
    fn resolution_needs_a_writer_turn() {
        let mut s = state(2);
        let t = s.record_assistant(resolved(), Some(span(0, 3)));
        assert!(t.comment.is_none());
        assert_eq!(s.active_step(), Some(1));
        s.record_user("I generalize from one case").unwrap();
        let t = s.record_assistant(resolved(), Some(span(0, 3)));
        let comment = t.comment.unwrap();
        assert_eq!(comment.intention, "fix it");
        assert_eq!(comment.user_text, "I generalize from one case");
        assert_eq!(t.activated, Some(2));
        assert_eq!(s.progress(), (1, 2));
        assert!(s.check_invariants().is_empty());
    }

    #[test]
    fn writer_turn_from_previous_step_does_not_count() {
        let mut s = state(2);
        s.record_user("x").unwrap();
        s.skip_active().unwrap();
        let t = s.record_assistant(resolved(), None);
        assert!(t.comment.is_none());
    }

    #[test]
    fn last_resolution_finishes() {
        let mut s = state(1);
        s.record_user("x").unwrap();
        let t = s.record_assistant(resolved(), None);
        assert!(t.finished && s.finished);
        assert_eq!(s.record_user("y"), Err(SessionError::Finished));
        assert_eq!(s.skip_active(), Err(SessionError::Finished));
    }

    #[test]
    fn focus_follows_active_step() {
        let mut s = state(2);
        s.record_assistant(AssistantReply::fixed("q"), Some(span(0, 3)));
        assert_eq!(s.current_focus(), Some(span(0, 3)));
        s.skip_active().unwrap();
        assert_eq!(s.current_focus(), None);
        s.record_assistant(AssistantReply::fixed("q"), Some(span(4, 7)));
        assert_eq!(s.current_focus(), Some(span(4, 7)));
    }

    #[test]
    fn truncation_respects_limit() {
        let long = "é".repeat(450);
        let cut = truncate_chars(&long, MAX_MESSAGE_CHARS);
        assert_eq!(cut.chars().count(), MAX_MESSAGE_CHARS);
        assert!(cut.ends_with('…'));
        assert_eq!(truncate_chars("short", 400), "short");
    }

    #[test]
    fn state_round_trips() {
        let mut s = state(2);
        s.record_user("x").unwrap();
        s.record_assistant(resolved(), Some(span(0, 3)));
        let text = serde_json::to_string(&s).unwrap();
        let back: SessionState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
