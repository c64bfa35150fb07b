//! HTTP backends over the standard chat-completions and embeddings POST
//! schemas, with bounded retries and exponential backoff.
//!
//! Request/response shapes are documented in `docs/http-api.md`, with the
//! captured fixtures used by the integration tests. Every outgoing request
//! bumps a process-wide counter so tests can assert that mock-mode runs
//! touch the network zero times.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use memecmd_core::backend::{
    BackendError, ChatBackend, ChatMessage, EmbeddingBackend, Part, VisionBackend,
};
use memecmd_core::vector::{l2_normalize, Vector};

/// Environment variable holding the bearer token for all HTTP backends.
pub const API_KEY_ENV: &str = "MEMECMD_API_KEY";

static NETWORK_REQUESTS: AtomicU64 = AtomicU64::new(0);

/// Number of HTTP requests issued by this process.
pub fn network_request_count() -> u64 {
    NETWORK_REQUESTS.load(Ordering::SeqCst)
}

/// Connection settings shared by the chat, vision, and embedding backends.
#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub timeout_secs: u64,
    /// Total attempts, including the first one.
    pub retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: String::new(),
            model: String::new(),
            temperature: 0.8,
            max_tokens: Some(512),
            timeout_secs: 60,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

fn build_client(cfg: &HttpConfig) -> Result<reqwest::blocking::Client, BackendError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(cfg.timeout_secs))
        .build()
        .map_err(|e| BackendError::Transport(e.to_string()))
}

fn retryable(err: &BackendError) -> bool {
    match err {
        BackendError::Transport(_) => true,
        BackendError::Status { code, .. } => *code >= 500,
        _ => false,
    }
}

/// Runs `attempt` up to `cfg.retries` times, backing off between tries on
/// transport errors and 5xx responses only.
fn with_retries<T>(
    cfg: &HttpConfig,
    mut attempt: impl FnMut() -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let budget = cfg.retries.max(1);
    let mut last = None;
    for n in 1..=budget {
        match attempt() {
            Ok(v) => return Ok(v),
            Err(e) if retryable(&e) => {
                if n < budget {
                    let delay = cfg.backoff_ms.saturating_mul(1 << (n - 1));
                    std::thread::sleep(Duration::from_millis(delay));
                }
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(BackendError::Exhausted {
        attempts: budget,
        last: last.expect("at least one attempt ran").to_string(),
    })
}

fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    body: &Value,
) -> Result<Value, BackendError> {
    NETWORK_REQUESTS.fetch_add(1, Ordering::SeqCst);
    let mut req = client.post(url).json(body);
    if let Ok(key) = std::env::var(API_KEY_ENV) {
        if !key.is_empty() {
            req = req.bearer_auth(key);
        }
    }
    let resp = req
        .send()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = resp.status();
    let text = resp
        .text()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if !status.is_success() {
        return Err(BackendError::Status {
            code: status.as_u16(),
            body: text,
        });
    }
    serde_json::from_str(&text).map_err(|e| BackendError::Format {
        reason: format!("response is not JSON: {e}"),
        raw: text,
    })
}

fn message_to_json(message: &ChatMessage) -> Value {
    let only_text = message.parts.iter().all(|p| matches!(p, Part::Text(_)));
    if only_text {
        return json!({
            "role": message.role.as_str(),
            "content": message.text_content(),
        });
    }
    let parts: Vec<Value> = message
        .parts
        .iter()
        .map(|part| match part {
            Part::Text(t) => json!({"type": "text", "text": t}),
            Part::Image { data, mime } => {
                let b64 = base64::engine::general_purpose::STANDARD.encode(data);
                json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:{mime};base64,{b64}")},
                })
            }
        })
        .collect();
    json!({"role": message.role.as_str(), "content": parts})
}

fn extract_chat_text(value: &Value, raw: impl Fn() -> String) -> Result<String, BackendError> {
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Format {
            reason: "missing choices[0].message.content".into(),
            raw: raw(),
        })
}

/// Chat-completions backend.
pub struct HttpChat {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(cfg: HttpConfig) -> Result<Self, BackendError> {
        let client = build_client(&cfg)?;
        Ok(HttpChat { cfg, client })
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let mut body = json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": messages.iter().map(message_to_json).collect::<Vec<_>>(),
        });
        if let Some(max) = self.cfg.max_tokens {
            body["max_tokens"] = json!(max);
        }
        with_retries(&self.cfg, || {
            let value = post_json(&self.client, &url, &body)?;
            extract_chat_text(&value, || value.to_string())
        })
    }
}

impl ChatBackend for HttpChat {
    fn send(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        self.complete(messages)
    }
}

/// Vision backend over the same chat-completions schema: the prompt and
/// the image travel as one multimodal user message.
pub struct HttpVision {
    inner: HttpChat,
}

impl HttpVision {
    pub fn new(cfg: HttpConfig) -> Result<Self, BackendError> {
        Ok(HttpVision {
            inner: HttpChat::new(cfg)?,
        })
    }
}

impl VisionBackend for HttpVision {
    fn describe(&self, image: &[u8], prompt: &str) -> Result<String, BackendError> {
        let message = ChatMessage {
            role: memecmd_core::backend::Role::User,
            parts: vec![
                Part::Image {
                    data: image.to_vec(),
                    mime: sniff_mime(image).to_string(),
                },
                Part::Text(prompt.to_string()),
            ],
        };
        self.inner.complete(std::slice::from_ref(&message))
    }
}

/// Guesses the image MIME type from magic bytes; defaults to PNG.
pub fn sniff_mime(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        "image/jpeg"
    } else if bytes.starts_with(b"GIF8") {
        "image/gif"
    } else if bytes.len() > 11 && &bytes[8..12] == b"WEBP" {
        "image/webp"
    } else {
        "image/png"
    }
}

/// Embeddings backend. Server output is L2-normalized into the unit-norm
/// contract; a wrong dimensionality is an error.
pub struct HttpEmbedding {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
    dim: usize,
}

impl HttpEmbedding {
    pub fn new(cfg: HttpConfig, dim: usize) -> Result<Self, BackendError> {
        assert!(dim > 0, "embedding dimension must be positive");
        let client = build_client(&cfg)?;
        Ok(HttpEmbedding { cfg, client, dim })
    }

    fn request(&self, input: Value) -> Result<Vector, BackendError> {
        let url = format!("{}/embeddings", self.cfg.base_url.trim_end_matches('/'));
        let body = json!({"model": self.cfg.model, "input": input});
        with_retries(&self.cfg, || {
            let value = post_json(&self.client, &url, &body)?;
            let components = value
                .pointer("/data/0/embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| BackendError::Format {
                    reason: "missing data[0].embedding".into(),
                    raw: value.to_string(),
                })?;
            let floats: Option<Vec<f64>> = components.iter().map(Value::as_f64).collect();
            let floats = floats.ok_or_else(|| BackendError::Format {
                reason: "embedding contains non-numbers".into(),
                raw: value.to_string(),
            })?;
            if floats.len() != self.dim {
                return Err(BackendError::Format {
                    reason: format!("embedding has {} components, expected {}", floats.len(), self.dim),
                    raw: value.to_string(),
                });
            }
            let v = Vector::new(floats).map_err(|e| BackendError::Format {
                reason: e.to_string(),
                raw: value.to_string(),
            })?;
            l2_normalize(&v).map_err(|e| BackendError::Format {
                reason: e.to_string(),
                raw: value.to_string(),
            })
        })
    }
}

impl EmbeddingBackend for HttpEmbedding {
    fn embed(&self, text: &str) -> Result<Vector, BackendError> {
        self.request(json!(text))
    }

    fn embed_image(&self, image: &[u8]) -> Result<Vector, BackendError> {
        let b64 = base64::engine::general_purpose::STANDARD.encode(image);
        self.request(json!({"image_b64": b64, "mime": sniff_mime(image)}))
    }

    fn dim(&self) -> usize {
        self.dim
    }
}
