//! Chat-completions style backend client, plus a scripted stand-in for
//! tests.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    #[default]
    Deterministic,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub mode: BackendMode,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_tool_rounds: usize,
    /// Replaces the built-in system prompt when set.
    pub system_prompt: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            mode: BackendMode::Deterministic,
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "POWERDESK_API_KEY".into(),
            timeout_secs: 60,
            max_tool_rounds: 6,
            system_prompt: None,
        }
    }
}

pub const DEFAULT_SYSTEM_PROMPT: &str = include_str!("../../prompts/system.txt");

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum BackendError {
    #[error("backend request timed out")]
    Timeout,
    #[error("backend transport error: {0}")]
    TransportError(String),
    #[error("malformed backend reply: {0}")]
    MalformedBackendReply(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(text: &str) -> Self {
        Self::plain("system", text)
    }

    pub fn user(text: &str) -> Self {
        Self::plain("user", text)
    }

    pub fn assistant_text(text: &str) -> Self {
        Self::plain("assistant", text)
    }

    fn plain(role: &str, text: &str) -> Self {
        ChatMessage {
            role: role.into(),
            content: Some(text.into()),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn tool(id: &str, content: &str) -> Self {
        ChatMessage {
            role: "tool".into(),
            content: Some(content.into()),
            tool_calls: Vec::new(),
            tool_call_id: Some(id.into()),
        }
    }

    fn to_wire(&self) -> Value {
        let mut m = json!({"role": self.role, "content": self.content});
        if !self.tool_calls.is_empty() {
            m["tool_calls"] = self
                .tool_calls
                .iter()
                .map(|c| {
                    json!({
                        "id": c.id,
                        "type": "function",
                        "function": {"name": c.name, "arguments": c.raw_arguments},
                    })
                })
                .collect();
        }
        if let Some(id) = &self.tool_call_id {
            m["tool_call_id"] = json!(id);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    /// Arguments as the model wrote them.
    pub raw_arguments: String,
}

impl ToolCall {
    /// Parsed argument object; `None` when the text is not a JSON object.
    pub fn arguments(&self) -> Option<Value> {
        if self.raw_arguments.trim().is_empty() {
            return Some(json!({}));
        }
        serde_json::from_str::<Value>(&self.raw_arguments).ok().filter(Value::is_object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AssistantAction {
    ToolCalls { calls: Vec<ToolCall> },
    FinalText { text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    pub action: AssistantAction,
    pub usage: Option<TokenUsage>,
    pub latency_ms: u64,
}

pub trait ChatBackend: Send + Sync {
    fn step(&self, messages: &[ChatMessage], tools: &[Value]) -> Result<BackendReply, BackendError>;
}

/// Reads one chat-completions response document.
pub fn parse_reply(body: &Value, latency_ms: u64) -> Result<BackendReply, BackendError> {
    let bad = |m: &str| BackendError::MalformedBackendReply(m.to_string());
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| bad("no choices[0].message"))?;
    let usage = body.get("usage").map(|u| TokenUsage {
        prompt_tokens: u["prompt_tokens"].as_u64().unwrap_or(0),
        completion_tokens: u["completion_tokens"].as_u64().unwrap_or(0),
    });
    let calls = message.get("tool_calls").and_then(Value::as_array);
    let action = match calls {
        Some(list) if !list.is_empty() => {
            let mut out = Vec::new();
            for (k, c) in list.iter().enumerate() {
                let name = c
                    .pointer("/function/name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| bad("tool call without a function name"))?;
                let args = match c.pointer("/function/arguments") {
                    Some(Value::String(s)) => s.clone(),
                    Some(v @ Value::Object(_)) => v.to_string(),
                    _ => String::new(),
                };
                out.push(ToolCall {
                    id: c["id"].as_str().map_or_else(|| format!("call_{k}"), str::to_string),
                    name: name.to_string(),
                    raw_arguments: args,
                });
            }
            AssistantAction::ToolCalls { calls: out }
        }
        _ => AssistantAction::FinalText {
            text: message
                .get("content")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("reply has neither tool calls nor text"))?
                .to_string(),
        },
    };
    Ok(BackendReply {
        action,
        usage,
        latency_ms,
    })
}

pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::TransportError(e.to_string()))?;
        Ok(HttpBackend { config, client })
    }
}

impl ChatBackend for HttpBackend {
    fn step(&self, messages: &[ChatMessage], tools: &[Value]) -> Result<BackendReply, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": messages.iter().map(ChatMessage::to_wire).collect::<Vec<_>>(),
            "tools": tools,
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.bearer_auth(key);
        }
        let t = Instant::now();
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::TransportError(e.to_string())
            }
        })?;
        let status = resp.status();
        let doc: Value = resp
            .json()
            .map_err(|e| BackendError::MalformedBackendReply(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::TransportError(format!("HTTP {status}: {doc}")));
        }
        parse_reply(&doc, t.elapsed().as_millis() as u64)
    }
}

/// Replays a fixed list of replies and records what it was sent.
#[derive(Default)]
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<BackendReply, BackendError>>>,
    pub seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedBackend {
    pub fn new(replies: impl IntoIterator<Item = Result<AssistantAction, BackendError>>) -> Self {
        ScriptedBackend {
            replies: Mutex::new(
                replies
                    .into_iter()
                    .map(|r| {
                        r.map(|action| BackendReply {
                            action,
                            usage: Some(TokenUsage {
                                prompt_tokens: 100,
                                completion_tokens: 20,
                            }),
                            latency_ms: 0,
                        })
                    })
                    .collect(),
            ),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn tool_call(name: &str, args: Value) -> AssistantAction {
        AssistantAction::ToolCalls {
            calls: vec![ToolCall {
                id: format!("call_{name}"),
                name: name.into(),
                raw_arguments: args.to_string(),
            }],
        }
    }

    pub fn text(t: &str) -> AssistantAction {
        AssistantAction::FinalText { text: t.into() }
    }
}

impl ChatBackend for ScriptedBackend {
    fn step(&self, messages: &[ChatMessage], _tools: &[Value]) -> Result<BackendReply, BackendError> {
        self.seen.lock().expect("lock").push(messages.to_vec());
        self.replies
            .lock()
            .expect("lock")
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::MalformedBackendReply("script exhausted".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tool_call_reply() {
        let body = json!({
            "choices": [{"message": {"role": "assistant", "content": null, "tool_calls": [
                {"id": "c1", "type": "function", "function": {"name": "solve_acopf_case", "arguments": "{\"case_name\":\"case14\"}"}}
            ]}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 3}
        });
        let r = parse_reply(&body, 5).unwrap();
        match r.action {
            AssistantAction::ToolCalls { calls } => {
                assert_eq!(calls[0].name, "solve_acopf_case");
                assert_eq!(calls[0].arguments().unwrap()["case_name"], "case14");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(r.usage.unwrap().prompt_tokens, 12);
    }

    #[test]
    fn parses_prose_reply_and_rejects_empty() {
        let body = json!({"choices": [{"message": {"role": "assistant", "content": "Done."}}]});
        assert_eq!(
            parse_reply(&body, 0).unwrap().action,
            AssistantAction::FinalText { text: "Done.".into() }
        );
        assert!(parse_reply(&json!({"choices": []}), 0).is_err());
    }

    #[test]
    fn malformed_arguments_are_detected() {
        let c = ToolCall {
            id: "x".into(),
            name: "t".into(),
            raw_arguments: "{not json".into(),
        };
        assert!(c.arguments().is_none());
    }
}
