//! JSON shapes of stored records and API responses.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use inker_core::anchor::AnchoredSpan;
use inker_core::graph::QuoteId;
use inker_core::pipeline::{PipelineResult, Stage};
use inker_core::socratic::{CommentMarker, SessionState, Turn};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssayRecord {
    pub essay_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub latest_analysis_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Visual,
    Socratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_pending(self) -> bool {
        matches!(self, JobStatus::Queued | JobStatus::Running)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusChange {
    pub status: JobStatus,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HighlightRole {
    MainClaim,
    Support,
}

/// A character span the client can decorate without re-matching text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub quote_id: QuoteId,
    pub start: usize,
    pub end: usize,
    pub role: HighlightRole,
    /// Invalid relations this quote is a source of.
    pub invalid_relations: Vec<usize>,
}

pub fn highlights(result: &PipelineResult) -> Vec<Highlight> {
    let invalid: BTreeSet<usize> = result.evaluated.invalid_relations().into_iter().collect();
    result
        .anchors
        .values()
        .map(|span| Highlight {
            quote_id: span.quote_id,
            start: span.start,
            end: span.end,
            role: if span.quote_id.is_claim() {
                HighlightRole::MainClaim
            } else {
                HighlightRole::Support
            },
            invalid_relations: result
                .analysis
                .relations
                .iter()
                .enumerate()
                .filter(|(i, r)| invalid.contains(i) && r.sources.contains(&span.quote_id))
                .map(|(i, _)| i)
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub analysis_id: String,
    pub essay_id: String,
    pub mode: Mode,
    pub fingerprint: String,
    pub status: JobStatus,
    pub history: Vec<StatusChange>,
    #[serde(default)]
    pub result: Option<PipelineResult>,
    #[serde(default)]
    pub highlights: Vec<Highlight>,
    #[serde(default)]
    pub error: Option<JobError>,
}

impl AnalysisRecord {
    pub fn queued(analysis_id: String, essay_id: String, mode: Mode, fingerprint: String) -> Self {
        AnalysisRecord {
            analysis_id,
            essay_id,
            mode,
            fingerprint,
            status: JobStatus::Queued,
            history: vec![StatusChange {
                status: JobStatus::Queued,
                at: Utc::now(),
            }],
            result: None,
            highlights: Vec::new(),
            error: None,
        }
    }

    pub fn set_status(&mut self, status: JobStatus) {
        self.status = status;
        self.history.push(StatusChange { status, at: Utc::now() });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub resolved: usize,
    pub total: usize,
}

impl From<(usize, usize)> for Progress {
    fn from((resolved, total): (usize, usize)) -> Self {
        Progress { resolved, total }
    }
}

/// Session state plus the values a client would otherwise derive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub state: SessionState,
    pub progress: Progress,
    pub active_step: Option<u32>,
    pub current_focus: Option<AnchoredSpan>,
}

impl From<SessionState> for SessionView {
    fn from(state: SessionState) -> Self {
        SessionView {
            progress: state.progress().into(),
            active_step: state.active_step(),
            current_focus: state.current_focus(),
            state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageResponse {
    pub turns: Vec<Turn>,
    pub comment: Option<CommentMarker>,
    pub progress: Progress,
    pub finished: bool,
    pub current_focus: Option<AnchoredSpan>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssayComment {
    pub session_id: String,
    pub analysis_id: String,
    #[serde(flatten)]
    pub comment: CommentMarker,
}
