use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::http::{ClientError, HttpClient, HttpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    /// Image references (URLs or paths) passed through to the model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
            attachments: Vec::new(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
            attachments: Vec::new(),
        }
    }

    pub fn with_attachments(mut self, attachments: Vec<String>) -> Self {
        self.attachments = attachments;
        self
    }
}

pub trait ChatModel: Send + Sync {
    /// Raw assistant text for `messages`.
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ClientError>;
}

pub fn chat_complete(model: &dyn ChatModel, messages: &[ChatMessage]) -> Result<String, ClientError> {
    model.complete(messages)
}

/// Analyst endpoint as written in the engine config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChatBackend {
    Mock {
        #[serde(default)]
        fixtures: Option<PathBuf>,
    },
    Openai(HttpConfig),
}

impl ChatBackend {
    /// Builds the client; relative fixture paths resolve against `base`.
    pub fn connect(&self, base: &Path) -> Result<Box<dyn ChatModel>, ClientError> {
        Ok(match self {
            ChatBackend::Mock { fixtures: None } => Box::new(MockChat::default()),
            ChatBackend::Mock { fixtures: Some(p) } => Box::new(MockChat::load(&base.join(p))?),
            ChatBackend::Openai(cfg) => Box::new(OpenAiChat::new(cfg.clone())?),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    /// Every string must occur in the concatenated message contents.
    #[serde(default)]
    pub contains: Vec<String>,
    /// None of these may occur.
    #[serde(default)]
    pub excludes: Vec<String>,
    pub response: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MockFixtures {
    by_hash: BTreeMap<String, Value>,
    rules: Vec<MockRule>,
    default: Option<Value>,
}

/// Deterministic offline backend. Lookup order: exact prompt hash, then
/// the first matching rule, then the default response.
#[derive(Debug, Default)]
pub struct MockChat {
    fixtures: MockFixtures,
    calls: AtomicUsize,
}

fn response_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl MockChat {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        let fixtures = serde_json::from_str(&s)
            .map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        Ok(MockChat {
            fixtures,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn with_default(response: impl Into<String>) -> Self {
        let mut m = MockChat::default();
        m.fixtures.default = Some(Value::String(response.into()));
        m
    }

    pub fn register(&mut self, messages: &[ChatMessage], response: impl Into<String>) {
        self.fixtures
            .by_hash
            .insert(Self::prompt_hash(messages), Value::String(response.into()));
    }

    pub fn add_rule(&mut self, rule: MockRule) {
        self.fixtures.rules.push(rule);
    }

    /// SHA-256 hex of the JSON-serialized message list.
    pub fn prompt_hash(messages: &[ChatMessage]) -> String {
        let bytes = serde_json::to_vec(messages).expect("messages serialize");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatModel for MockChat {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let hash = Self::prompt_hash(messages);
        if let Some(v) = self.fixtures.by_hash.get(&hash) {
            return Ok(response_text(v));
        }
        let all: String = messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        let rule = self.fixtures.rules.iter().find(|r| {
            r.contains.iter().all(|s| all.contains(s.as_str())) && !r.excludes.iter().any(|s| all.contains(s.as_str()))
        });
        rule.map(|r| &r.response)
            .or(self.fixtures.default.as_ref())
            .map(response_text)
            .ok_or(ClientError::MockMiss(hash))
    }
}

/// Client for `/chat/completions` on an OpenAI-compatible server.
#[derive(Debug)]
pub struct OpenAiChat {
    http: HttpClient,
}

impl OpenAiChat {
    pub fn new(config: HttpConfig) -> Result<Self, ClientError> {
        Ok(OpenAiChat {
            http: HttpClient::new(config)?,
        })
    }

    pub fn request_body(config: &HttpConfig, messages: &[ChatMessage]) -> Value {
        let wire: Vec<Value> = messages
            .iter()
            .map(|m| {
                let content = if m.attachments.is_empty() {
                    Value::String(m.content.clone())
                } else {
                    let mut parts = vec![json!({"type": "text", "text": m.content})];
                    parts.extend(
                        m.attachments
                            .iter()
                            .map(|url| json!({"type": "image_url", "image_url": {"url": url}})),
                    );
                    Value::Array(parts)
                };
                json!({"role": m.role, "content": content})
            })
            .collect();
        json!({
            "model": config.model,
            "temperature": config.temperature,
            "messages": wire,
        })
    }
}

impl ChatModel for OpenAiChat {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ClientError> {
        let body = Self::request_body(self.http.config(), messages);
        let resp = self.http.post_json("chat/completions", &body)?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ClientError::Decode("response has no choices[0].message.content".into()))?;
        Ok(text.to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::RetryPolicy;
    use std::time::{Duration, Instant};

    #[test]
    fn mock_lookup_order() {
        let msgs = [ChatMessage::system("sys"), ChatMessage::user("ZIP: 77067\nhello")];
        let mut m = MockChat::with_default("fallback");
        m.add_rule(MockRule {
            contains: vec!["ZIP: 77067".into()],
            excludes: vec!["visual".into()],
            response: json!({"a": 1}),
        });
        assert_eq!(m.complete(&msgs).unwrap(), r#"{"a":1}"#);
        m.register(&msgs, "  exact bytes\n");
        assert_eq!(m.complete(&msgs).unwrap(), "  exact bytes\n");
        assert_eq!(m.complete(&[ChatMessage::user("visual ZIP: 77067")]).unwrap(), "fallback");
        assert_eq!(m.calls(), 3);
        assert!(matches!(MockChat::default().complete(&msgs), Err(ClientError::MockMiss(_))));
    }

    #[test]
    fn wire_format_with_attachments() {
        let cfg = HttpConfig::new("http://x", "m");
        let body = OpenAiChat::request_body(
            &cfg,
            &[ChatMessage::user("look").with_attachments(vec!["file:///t1.png".into()])],
        );
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"][1]["image_url"]["url"], "file:///t1.png");
    }

    #[test]
    fn unreachable_endpoint_retries() {
        let mut cfg = HttpConfig::new("http://127.0.0.1:9", "m");
        cfg.retry = RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 20,
        };
        cfg.timeout_secs = 2;
        let chat = OpenAiChat::new(cfg.clone()).unwrap();
        let t = Instant::now();
        let err = chat_complete(&chat, &[ChatMessage::user("hi")]).unwrap_err();
        assert!(matches!(err, ClientError::RetriesExhausted { attempts: 3, .. }));
        assert!(t.elapsed() >= cfg.retry.total_backoff());
        assert!(cfg.retry.total_backoff() == Duration::from_millis(60));
    }
}
