//! HTTP providers: Anthropic messages API and OpenAI-compatible chat
//! completions.

use async_trait::async_trait;
use serde_json::{json, Value};

use super::{
    JsonMode, LlmProvider, ProviderError, ProviderReply, ProviderRequest, Role, TokenUsage,
};

const ANTHROPIC_VERSION: &str = "2023-06-01";
const TOOL_NAME: &str = "json_response";

fn transport(err: reqwest::Error) -> ProviderError {
    if err.is_timeout() {
        ProviderError::Timeout
    } else {
        ProviderError::Transport(err.to_string())
    }
}

async fn send(request: reqwest::RequestBuilder) -> Result<Value, ProviderError> {
    let response = request.send().await.map_err(transport)?;
    let status = response.status();
    let body = response.text().await.map_err(transport)?;
    if !status.is_success() {
        let detail: String = body.chars().take(500).collect();
        return Err(ProviderError::from_status(status.as_u16(), detail));
    }
    serde_json::from_str(&body)
        .map_err(|e| ProviderError::Transport(format!("provider returned invalid JSON: {e}")))
}

pub struct AnthropicProvider {
    client: reqwest::Client,
    base_url: String,
    api_key: String,
}

impl AnthropicProvider {
    pub fn new(base_url: String, api_key: String) -> Self {
        Self {
            client: reqwest::Client::new(),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
        }
    }

    fn body(request: &ProviderRequest<'_>) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        let mut body = json!({
            "model": request.model,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "messages": messages,
        });
        if let Some(system) = request.system {
            body["system"] = Value::String(system.to_string());
        }
        if request.json_mode == JsonMode::NativeSchemaTool {
            body["tools"] = json!([{
                "name": TOOL_NAME,
                "description": "Respond with JSON matching the input schema.",
                "input_schema": request.schema,
            }]);
            body["tool_choice"] = json!({"type": "tool", "name": TOOL_NAME});
        }
        body
    }
}

#[async_trait]
impl LlmProvider for AnthropicProvider {
    fn name(&self) -> &str {
        "anthropic"
    }

    async fn complete(&self, request: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderError> {
        let response = send(
            self.client
                .post(format!("{}/v1/messages", self.base_url))
                .header("x-api-key", &self.api_key)
                .header("anthropic-version", ANTHROPIC_VERSION)
                .json(&Self::body(request)),
        )
        .await?;

        let blocks = response["content"].as_array().cloned().unwrap_or_default();
        let text = blocks
            .iter()
            .find(|b| b["type"] == "tool_use")
            .map(|b| b["input"].to_string())
            .unwrap_or_else(|| {
                blocks
                    .iter()
                    .filter_map(|b| b["text"].as_str())
                    .collect::<Vec<_>>()
                    .join("")
            });
        let usage = response.get("usage").map(|u| TokenUsage {
            input_tokens: u["input_tokens"].as_u64().unwrap_or(0),
            output_tokens: u["output_tokens"].as_u64().unwrap_or(0),
        });
        Ok(ProviderReply { text, usage })
    }
}

pub struct OpenAiProvider {
    client: reqwest::Client,
    base_url: String,
    api_key: String,
}

impl OpenAiProvider {
    pub fn new(base_url: String, api_key: String) -> Self {
        Self {
            client: reqwest::Client::new(),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
        }
    }

    fn body(request: &ProviderRequest<'_>) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.extend(
            request
                .messages
                .iter()
                .map(|m| json!({"role": m.role.as_str(), "content": m.content})),
        );
        let mut body = json!({
            "model": request.model,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "messages": messages,
        });
        match request.json_mode {
            JsonMode::NativeSchemaTool => {
                body["response_format"] = json!({
                    "type": "json_schema",
                    "json_schema": {"name": TOOL_NAME, "schema": request.schema, "strict": false},
                });
            }
            JsonMode::JsonConstrained => {
                body["response_format"] = json!({"type": "json_object"});
            }
            JsonMode::PlainWithRepair => {}
        }
        body
    }
}

#[async_trait]
impl LlmProvider for OpenAiProvider {
    fn name(&self) -> &str {
        "openai"
    }

    async fn complete(&self, request: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderError> {
        let response = send(
            self.client
                .post(format!("{}/v1/chat/completions", self.base_url))
                .bearer_auth(&self.api_key)
                .json(&Self::body(request)),
        )
        .await?;
        let text = response["choices"][0]["message"]["content"]
            .as_str()
            .unwrap_or_default()
            .to_string();
        let usage = response.get("usage").map(|u| TokenUsage {
            input_tokens: u["prompt_tokens"].as_u64().unwrap_or(0),
            output_tokens: u["completion_tokens"].as_u64().unwrap_or(0),
        });
        Ok(ProviderReply { text, usage })
    }
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Message, PromptKind};

    fn request<'a>(mode: JsonMode, schema: &'a Value, messages: &'a [Message]) -> ProviderRequest<'a> {
        ProviderRequest {
            kind: PromptKind::Structure,
            system: Some("sys"),
            messages,
            schema,
            model: "m",
            temperature: 0.0,
            max_tokens: 100,
            json_mode: mode,
        }
    }

    #[test]
    fn anthropic_tool_body() {
        let schema = json!({"type": "object"});
        let messages = [Message::user("hi")];
        let body = AnthropicProvider::body(&request(JsonMode::NativeSchemaTool, &schema, &messages));
        assert_eq!(body["tool_choice"]["name"], TOOL_NAME);
        assert_eq!(body["tools"][0]["input_schema"], schema);
        assert_eq!(body["system"], "sys");
        assert_eq!(body["messages"][0]["role"], "user");
    }

    #[test]
    fn openai_modes() {
        let schema = json!({"type": "object"});
        let messages = [Message::user("hi")];
        let body = OpenAiProvider::body(&request(JsonMode::JsonConstrained, &schema, &messages));
        assert_eq!(body["response_format"]["type"], "json_object");
        assert_eq!(body["messages"][0]["role"], "system");
        let body = OpenAiProvider::body(&request(JsonMode::PlainWithRepair, &schema, &messages));
        assert!(body.get("response_format").is_none());
    }
}
