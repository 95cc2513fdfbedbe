//! Blocking HTTP client for chat-completions-style endpoints.
//!
//! Request body:
//!
//! ```json
//! {
//!   "model": "...",
//!   "messages": [
//!     {"role": "system", "content": "..."},
//!     {"role": "user", "content": "..."}
//!   ],
//!   "temperature": 0.0,
//!   "seed": 7,
//!   "max_tokens": 512
//! }
//! ```
//!
//! The system message is omitted when `system_text` is empty; `seed` and
//! `max_tokens` are omitted when unset. The reply's first choice message
//! content becomes the result text; `usage` fields are recorded when present.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatExchange, ChatResult};

/// Retry budget for transient failures: timeouts, connect errors, 5xx.
/// 4xx-class responses are permanent and never retried.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Initial delay; doubles per retry.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Bearer token taken from this environment variable when it is set.
    pub auth_env: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Permanent {
                status: None,
                message: format!("client construction failed: {e}"),
            })?;
        Ok(Self { config, client })
    }

    /// The exact request body sent for `exchange`.
    pub fn request_body(&self, exchange: &ChatExchange) -> Value {
        let mut messages = Vec::new();
        if !exchange.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": exchange.system_text}));
        }
        messages.push(json!({"role": "user", "content": exchange.user_text}));

        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": exchange.sampling.temperature,
        });
        if let Some(seed) = exchange.sampling.seed {
            body["seed"] = json!(seed);
        }
        if let Some(max) = exchange.sampling.max_output_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }

    fn send_once(&self, body: &Value) -> Result<ChatResult, AttemptError> {
        let mut request = self
            .client
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json")
            .json(body);
        if let Some(env_name) = &self.config.auth_env {
            if let Ok(token) = std::env::var(env_name) {
                request = request.header("Authorization", format!("Bearer {token}"));
            }
        }

        let started = Instant::now();
        let response = request.send().map_err(|e| {
            AttemptError::Transient(format!("transport error: {e}"))
        })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| AttemptError::Transient(format!("body read error: {e}")))?;
        let latency_ms = started.elapsed().as_millis() as u64;

        if status.is_server_error() {
            return Err(AttemptError::Transient(format!(
                "status {}: {}",
                status.as_u16(),
                truncate(&text)
            )));
        }
        if !status.is_success() {
            return Err(AttemptError::Permanent {
                status: status.as_u16(),
                message: truncate(&text),
            });
        }

        parse_completion(&text, latency_ms).map_err(AttemptError::Malformed)
    }
}

enum AttemptError {
    Transient(String),
    Permanent { status: u16, message: String },
    Malformed(String),
}

impl ChatBackend for HttpBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<ChatResult, BackendError> {
        let body = self.request_body(exchange);
        let max_attempts = self.config.retry.max_retries + 1;
        let mut delay = Duration::from_millis(self.config.retry.backoff_ms);
        let mut last_transient = String::new();

        for attempt in 1..=max_attempts {
            match self.send_once(&body) {
                Ok(result) => return Ok(result),
                Err(AttemptError::Permanent { status, message }) => {
                    return Err(BackendError::Permanent {
                        status: Some(status),
                        message,
                    })
                }
                Err(AttemptError::Malformed(message)) => {
                    return Err(BackendError::Malformed { message })
                }
                Err(AttemptError::Transient(message)) => {
                    log::warn!(
                        "backend attempt {attempt}/{max_attempts} failed transiently: {message}"
                    );
                    last_transient = message;
                    if attempt < max_attempts {
                        std::thread::sleep(delay);
                        delay = delay.saturating_mul(2);
                    }
                }
            }
        }

        Err(BackendError::Transient {
            message: last_transient,
            attempts: max_attempts,
        })
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn parse_completion(text: &str, latency_ms: u64) -> Result<ChatResult, String> {
    let body: CompletionBody =
        serde_json::from_str(text).map_err(|e| format!("unparseable completion body: {e}"))?;
    let first = body
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| "completion body has no choices".to_string())?;
    let usage = body.usage.unwrap_or_default();
    Ok(ChatResult {
        text: first.message.content,
        prompt_tokens: usage.prompt_tokens,
        completion_tokens: usage.completion_tokens,
        latency_ms,
    })
}

fn truncate(text: &str) -> String {
    const LIMIT: usize = 300;
    if text.len() <= LIMIT {
        text.to_string()
    } else {
        let mut end = LIMIT;
        while !text.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &text[..end])
    }
}
