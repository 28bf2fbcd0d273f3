//! Provider-agnostic model client that only ever hands back JSON matching a
//! schema.
//!
//! Every call goes through [`Gateway::complete_json`]: the reply is repaired
//! (fences and surrounding prose stripped), validated against the schema and,
//! on failure, re-requested with the validation error appended as a new user
//! message. That appended feedback is the only change ever made to a prompt.

mod http;
mod limiter;
mod mock;
mod repair;

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{AnthropicProvider, OpenAiProvider};
pub use limiter::TokenBucket;
pub use mock::{load_rules, MockFailure, MockProvider, MockResponse, MockRule};
pub use repair::{repair_json, Unparseable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Structure,
    Validity,
    Plan,
    Socratic,
}

impl PromptKind {
    /// Analysis stages run deterministically; dialogue gets some variety.
    pub fn default_temperature(self) -> f64 {
        match self {
            PromptKind::Socratic => 0.7,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JsonMode {
    /// Forced tool call whose input schema is the output schema.
    NativeSchemaTool,
    /// Provider JSON mode without a schema.
    JsonConstrained,
    /// Plain text, JSON recovered by [`repair_json`].
    PlainWithRepair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Anthropic,
    Openai,
    Mock,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "anthropic" => Ok(ProviderKind::Anthropic),
            "openai" => Ok(ProviderKind::Openai),
            "mock" => Ok(ProviderKind::Mock),
            other => Err(format!("unknown provider {other:?} (anthropic, openai, mock)")),
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::Anthropic => "anthropic",
            ProviderKind::Openai => "openai",
            ProviderKind::Mock => "mock",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub provider: ProviderKind,
    pub model_name: String,
    /// Fixed temperature for every prompt; unset uses the per-prompt default.
    pub temperature: Option<f64>,
    pub max_output_tokens: u32,
    pub timeout_secs: f64,
    pub json_mode: JsonMode,
    /// Total attempts per call, counting schema and transient provider failures.
    pub max_attempts: u32,
    pub backoff_initial_secs: f64,
    pub requests_per_minute: Option<u32>,
    pub base_url: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Anthropic,
            model_name: "claude-sonnet-4-5".into(),
            temperature: None,
            max_output_tokens: 4096,
            timeout_secs: 120.0,
            json_mode: JsonMode::NativeSchemaTool,
            max_attempts: 3,
            backoff_initial_secs: 1.0,
            requests_per_minute: None,
            base_url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid model configuration: {0}")]
    Invalid(String),
    #[error("missing API key: set {var} (or run with --mock <fixtures dir>)")]
    MissingKey { var: &'static str },
    #[error("mock provider needs a fixtures directory")]
    MissingMockFixtures,
    #[error("mock fixtures: {0}")]
    Mock(String),
}

impl ModelConfig {
    pub fn mock() -> Self {
        Self {
            provider: ProviderKind::Mock,
            model_name: "mock".into(),
            json_mode: JsonMode::PlainWithRepair,
            backoff_initial_secs: 0.0,
            timeout_secs: 30.0,
            ..Self::default()
        }
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.timeout_secs > 0.0) {
            return bad("timeout must be positive");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        if self.temperature.is_some_and(|t| !(t >= 0.0)) {
            return bad("temperature must be >= 0");
        }
        if !(self.backoff_initial_secs >= 0.0) {
            return bad("backoff must be >= 0");
        }
        if self.model_name.trim().is_empty() {
            return bad("model name is empty");
        }
        Ok(())
    }

    pub fn temperature_for(&self, kind: PromptKind) -> f64 {
        self.temperature.unwrap_or_else(|| kind.default_temperature())
    }

    /// Stable hash of the configuration, used to key idempotent jobs.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("plain data");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// What a caller asks of the gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct JsonRequest {
    pub kind: PromptKind,
    pub system: Option<String>,
    pub messages: Vec<Message>,
    pub schema: Value,
}

impl JsonRequest {
    pub fn prompt(kind: PromptKind, prompt: impl Into<String>, schema: Value) -> Self {
        Self {
            kind,
            system: None,
            messages: vec![Message::user(prompt)],
            schema,
        }
    }
}

/// What a provider receives for one attempt.
#[derive(Debug, Clone, Copy)]
pub struct ProviderRequest<'a> {
    pub kind: PromptKind,
    pub system: Option<&'a str>,
    pub messages: &'a [Message],
    pub schema: &'a Value,
    pub model: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub json_mode: JsonMode,
}

impl ProviderRequest<'_> {
    /// System prompt and messages joined, for matching and logging.
    pub fn flattened_text(&self) -> String {
        let mut text = String::new();
        if let Some(system) = self.system {
            text.push_str(system);
            text.push('\n');
        }
        for m in self.messages {
            text.push_str(&m.content);
            text.push('\n');
        }
        text
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("provider returned HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("{0}")]
    NoFixture(String),
}

impl ProviderError {
    pub fn from_status(status: u16, message: String) -> Self {
        match status {
            401 | 403 => ProviderError::Auth(message),
            429 => ProviderError::RateLimited(message),
            _ => ProviderError::Http { status, message },
        }
    }

    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::RateLimited(_) | ProviderError::Transport(_) | ProviderError::Timeout => true,
            ProviderError::Http { status, .. } => *status >= 500,
            ProviderError::Auth(_) | ProviderError::NoFixture(_) => false,
        }
    }
}

#[async_trait]
pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;

    async fn complete(&self, request: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("invalid output schema: {0}")]
    BadSchema(String),
    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),
    #[error("no schema-conforming reply after {attempts} attempt(s): {last_error}")]
    SchemaFailure {
        attempts: u32,
        last_error: String,
        raw: String,
    },
    #[error("timed out after {0:.1}s")]
    Timeout(f64),
}

/// One successful structured completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_id: PromptKind,
    pub raw_text: String,
    pub parsed: Option<Value>,
    /// Wall-clock seconds of the final, successful attempt.
    pub latency: f64,
    pub attempts: u32,
    pub token_usage: Option<TokenUsage>,
}

impl CompletionRecord {
    pub fn value(&self) -> &Value {
        self.parsed.as_ref().unwrap_or(&Value::Null)
    }
}

struct AuditLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl AuditLog {
    fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    fn write(&self, entry: Value) {
        let mut file = self.file.lock().expect("audit log lock poisoned");
        if let Err(e) = writeln!(file, "{entry}") {
            log::warn!("cannot append to audit log {}: {e}", self.path.display());
        }
    }
}

pub struct Gateway {
    provider: Arc<dyn LlmProvider>,
    config: ModelConfig,
    limiter: Option<TokenBucket>,
    audit: Option<AuditLog>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.name())
            .field("config", &self.config)
            .finish()
    }
}

fn env_or(var: &str, default: &str) -> String {
    std::env::var(var).ok().filter(|v| !v.is_empty()).unwrap_or_else(|| default.to_string())
}

/// Builds the provider named by the configuration. API keys and base URLs
/// come from `ANTHROPIC_API_KEY` / `ANTHROPIC_BASE_URL` and
/// `OPENAI_API_KEY` / `OPENAI_BASE_URL`.
pub fn build_provider(
    config: &ModelConfig,
    mock_fixtures: Option<&Path>,
) -> Result<Arc<dyn LlmProvider>, ConfigError> {
    config.validate()?;
    let key = |var: &'static str| {
        std::env::var(var)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(ConfigError::MissingKey { var })
    };
    Ok(match config.provider {
        ProviderKind::Mock => {
            let dir = mock_fixtures.ok_or(ConfigError::MissingMockFixtures)?;
            Arc::new(MockProvider::from_dir(dir).map_err(ConfigError::Mock)?)
        }
        ProviderKind::Anthropic => {
            let base = config
                .base_url
                .clone()
                .unwrap_or_else(|| env_or("ANTHROPIC_BASE_URL", "https://api.anthropic.com"));
            Arc::new(AnthropicProvider::new(base, key("ANTHROPIC_API_KEY")?))
        }
        ProviderKind::Openai => {
            let base = config
                .base_url
                .clone()
                .unwrap_or_else(|| env_or("OPENAI_BASE_URL", "https://api.openai.com"));
            Arc::new(OpenAiProvider::new(base, key("OPENAI_API_KEY")?))
        }
    })
}

fn feedback_message(error: &str) -> Message {
    Message::user(format!(
        "Your previous reply could not be used: {error}\nReply again with only the JSON object in the requested format."
    ))
}

impl Gateway {
    pub fn new(provider: Arc<dyn LlmProvider>, config: ModelConfig) -> Self {
        let limiter = config.requests_per_minute.map(TokenBucket::per_minute);
        Self {
            provider,
            config,
            limiter,
            audit: None,
        }
    }

    /// Appends one JSON line per attempt to `path`.
    pub fn with_audit_log(mut self, path: &Path) -> std::io::Result<Self> {
        self.audit = Some(AuditLog::open(path)?);
        Ok(self)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub async fn complete_json(&self, request: JsonRequest) -> Result<CompletionRecord, GatewayError> {
        self.complete_json_checked(request, |_| Ok(())).await
    }

    /// Like [`Gateway::complete_json`], with an extra semantic check run after
    /// schema validation. A failed check is retried like a schema failure.
    pub async fn complete_json_checked<F>(
        &self,
        request: JsonRequest,
        check: F,
    ) -> Result<CompletionRecord, GatewayError>
    where
        F: Fn(&Value) -> Result<(), String> + Send + Sync,
    {
        if request.messages.iter().all(|m| m.content.trim().is_empty()) {
            return Err(GatewayError::EmptyPrompt);
        }
        let validator = jsonschema::validator_for(&request.schema)
            .map_err(|e| GatewayError::BadSchema(e.to_string()))?;
        let cfg = &self.config;
        let mut messages = request.messages.clone();
        let mut last_error = String::new();
        let mut last_raw = String::new();
        let mut backoff = cfg.backoff_initial_secs;

        for attempt in 1..=cfg.max_attempts {
            if let Some(limiter) = &self.limiter {
                limiter.acquire().await;
            }
            let provider_request = ProviderRequest {
                kind: request.kind,
                system: request.system.as_deref(),
                messages: &messages,
                schema: &request.schema,
                model: &cfg.model_name,
                temperature: cfg.temperature_for(request.kind),
                max_tokens: cfg.max_output_tokens,
                json_mode: cfg.json_mode,
            };
            let started = Instant::now();
            let outcome = tokio::time::timeout(
                Duration::from_secs_f64(cfg.timeout_secs),
                self.provider.complete(&provider_request),
            )
            .await;
            let latency = started.elapsed().as_secs_f64();

            let reply = match outcome {
                Err(_) => {
                    self.log_attempt(&provider_request, attempt, latency, Err("timeout"));
                    if attempt == cfg.max_attempts {
                        return Err(GatewayError::Timeout(cfg.timeout_secs));
                    }
                    backoff = self.back_off(backoff).await;
                    continue;
                }
                Ok(Err(err)) => {
                    self.log_attempt(&provider_request, attempt, latency, Err(&err.to_string()));
                    if !err.is_retryable() || attempt == cfg.max_attempts {
                        return Err(GatewayError::Provider(err));
                    }
                    backoff = self.back_off(backoff).await;
                    continue;
                }
                Ok(Ok(reply)) => reply,
            };
            self.log_attempt(&provider_request, attempt, latency, Ok(&reply.text));

            let checked = repair_json(&reply.text)
                .map_err(|e| e.to_string())
                .and_then(|value| {
                    let errors: Vec<String> =
                        validator.iter_errors(&value).map(|e| format!("{} at {}", e, e.instance_path)).collect();
                    if errors.is_empty() {
                        Ok(value)
                    } else {
                        Err(format!("schema validation failed: {}", errors.join("; ")))
                    }
                })
                .and_then(|value| check(&value).map(|()| value));
            match checked {
                Ok(value) => {
                    return Ok(CompletionRecord {
                        prompt_id: request.kind,
                        raw_text: reply.text,
                        parsed: Some(value),
                        latency,
                        attempts: attempt,
                        token_usage: reply.usage,
                    })
                }
                Err(error) => {
                    log::debug!("attempt {attempt} for {:?} rejected: {error}", request.kind);
                    messages.push(Message::assistant(reply.text.clone()));
                    messages.push(feedback_message(&error));
                    last_error = error;
                    last_raw = reply.text;
                }
            }
        }
        Err(GatewayError::SchemaFailure {
            attempts: cfg.max_attempts,
            last_error,
            raw: last_raw,
        })
    }

    async fn back_off(&self, current: f64) -> f64 {
        if current > 0.0 {
            tokio::time::sleep(Duration::from_secs_f64(current)).await;
        }
        current * 2.0
    }

    fn log_attempt(
        &self,
        request: &ProviderRequest<'_>,
        attempt: u32,
        latency: f64,
        outcome: Result<&str, &str>,
    ) {
        let Some(audit) = &self.audit else { return };
        let (response, error) = match outcome {
            Ok(text) => (Some(text), None),
            Err(e) => (None, Some(e)),
        };
        audit.write(json!({
            "timestamp": chrono::Utc::now().to_rfc3339(),
            "provider": self.provider.name(),
            "model": request.model,
            "prompt_id": request.kind,
            "attempt": attempt,
            "latency": latency,
            "system": request.system,
            "messages": request.messages,
            "response": response,
            "error": error,
        }));
    }
}
