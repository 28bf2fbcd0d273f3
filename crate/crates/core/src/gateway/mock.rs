//! Offline provider serving canned responses from fixture files.
//!
//! A fixture directory holds one JSON file per item (essay, NLI pair, ...).
//! Each file is either a list of rules or `{"id": "...", "rules": [...]}`:
//!
//! ```json
//! {"id": "essay-01", "rules": [
//!   {"kind": "structure", "contains": ["Cities should ban cars"],
//!    "respond": [{"json": {"claim": {}}}]},
//!   {"kind": "socratic", "contains": ["Cities should ban cars"],
//!    "respond": [{"text": "not json"}, {"error": {"status": 503}}, {"json": {}, "delay_ms": 20}]}
//! ]}
//! ```
//!
//! A request is served by the first rule whose `kind` matches (when given)
//! and whose `contains` snippets all occur in the request text. Each rule
//! hands out its responses in order and repeats the last one when exhausted.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{LlmProvider, PromptKind, ProviderError, ProviderReply, ProviderRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFailure {
    #[serde(default = "default_status")]
    pub status: u16,
    #[serde(default)]
    pub message: String,
}

fn default_status() -> u16 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MockResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<MockFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

impl MockResponse {
    pub fn json(value: Value) -> Self {
        Self {
            json: Some(value),
            ..Self::default()
        }
    }

    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Self::default()
        }
    }

    pub fn error(status: u16, message: impl Into<String>) -> Self {
        Self {
            error: Some(MockFailure {
                status,
                message: message.into(),
            }),
            ..Self::default()
        }
    }

    pub fn delayed(mut self, ms: u64) -> Self {
        self.delay_ms = Some(ms);
        self
    }

    fn check(&self) -> Result<(), String> {
        let set = [self.json.is_some(), self.text.is_some(), self.error.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
        if set == 1 {
            Ok(())
        } else {
            Err("a mock response needs exactly one of `json`, `text`, `error`".into())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PromptKind>,
    #[serde(default)]
    pub contains: Vec<String>,
    pub respond: Vec<MockResponse>,
    /// Applied to every response of the rule unless the response sets its own.
    #[serde(default)]
    pub delay_ms: u64,
}

impl MockRule {
    pub fn new(kind: PromptKind, contains: &[&str], respond: Vec<MockResponse>) -> Self {
        Self {
            kind: Some(kind),
            contains: contains.iter().map(|s| s.to_string()).collect(),
            respond,
            delay_ms: 0,
        }
    }

    fn matches(&self, kind: PromptKind, text: &str) -> bool {
        self.kind.is_none_or(|k| k == kind) && self.contains.iter().all(|s| text.contains(s.as_str()))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureFile {
    Item {
        #[allow(dead_code)]
        #[serde(default)]
        id: Option<String>,
        rules: Vec<MockRule>,
    },
    Rules(Vec<MockRule>),
}

#[derive(Debug)]
pub struct MockProvider {
    rules: Vec<MockRule>,
    served: Vec<AtomicUsize>,
}

/// Rules of one fixture file.
pub fn load_rules(path: &Path) -> Result<Vec<MockRule>, String> {
    let raw = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let file: FixtureFile =
        serde_json::from_str(&raw).map_err(|e| format!("bad mock fixture {}: {e}", path.display()))?;
    Ok(match file {
        FixtureFile::Item { rules, .. } | FixtureFile::Rules(rules) => rules,
    })
}

impl MockProvider {
    pub fn from_rules(rules: Vec<MockRule>) -> Result<Self, String> {
        for (i, rule) in rules.iter().enumerate() {
            if rule.respond.is_empty() {
                return Err(format!("mock rule {i} has no responses"));
            }
            for r in &rule.respond {
                r.check().map_err(|e| format!("mock rule {i}: {e}"))?;
            }
        }
        let served = rules.iter().map(|_| AtomicUsize::new(0)).collect();
        Ok(Self { rules, served })
    }

    /// Loads every `*.json` file of a directory, in file name order.
    pub fn from_dir(dir: &Path) -> Result<Self, String> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| format!("cannot read mock fixtures {}: {e}", dir.display()))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        let mut rules = Vec::new();
        for path in paths {
            rules.extend(load_rules(&path)?);
        }
        Self::from_rules(rules)
    }

    /// How many responses each rule has served so far.
    pub fn served_counts(&self) -> Vec<usize> {
        self.served.iter().map(|c| c.load(Ordering::SeqCst)).collect()
    }
}

#[async_trait]
impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    async fn complete(&self, request: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderError> {
        let text = request.flattened_text();
        let (index, rule) = self
            .rules
            .iter()
            .enumerate()
            .find(|(_, rule)| rule.matches(request.kind, &text))
            .ok_or_else(|| {
                let head: String = text.chars().take(80).collect();
                ProviderError::NoFixture(format!("no {:?} fixture matches request {head:?}", request.kind))
            })?;
        let n = self.served[index].fetch_add(1, Ordering::SeqCst);
        let response = &rule.respond[n.min(rule.respond.len() - 1)];
        let delay = response.delay_ms.unwrap_or(rule.delay_ms);
        if delay > 0 {
            tokio::time::sleep(Duration::from_millis(delay)).await;
        }
        if let Some(failure) = &response.error {
            return Err(ProviderError::from_status(failure.status, failure.message.clone()));
        }
        let text = match (&response.json, &response.text) {
            (Some(value), _) => value.to_string(),
            (None, Some(text)) => text.clone(),
            (None, None) => unreachable!("checked at construction"),
        };
        Ok(ProviderReply { text, usage: None })
    }
}
