//! One chat-exchange interface over two backends: a deterministic scripted
//! queue for tests and fixtures, and an HTTP client for chat-completions-style
//! endpoints. Conversations flatten their whole context into `user_text`;
//! `system_text` carries the agent's role description.

mod http;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpBackendConfig, RetryPolicy};
pub use scripted::ScriptedBackend;

/// Sampling controls sent with every exchange. Temperature defaults to 0 so
/// runs are as deterministic as the backend allows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_output_tokens: Option<u32>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            seed: None,
            max_output_tokens: None,
        }
    }
}

/// A single system+user prompt pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system_text: String,
    pub user_text: String,
    pub sampling: SamplingParams,
}

/// A backend's reply. Token fields are 0 when the backend reports no usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResult {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// A scripted queue ran dry. Never silently reused.
    #[error("scripted backend '{key}' exhausted after {served} responses")]
    ScriptExhausted { key: String, served: usize },
    /// Transient transport failure (timeout, connect error, 5xx) that
    /// persisted through the retry budget.
    #[error("transient backend failure after {attempts} attempts: {message}")]
    Transient { message: String, attempts: u32 },
    /// 4xx-class or otherwise non-retryable failure.
    #[error("permanent backend failure{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Permanent { status: Option<u16>, message: String },
    /// The endpoint answered but the body was not a usable completion.
    #[error("malformed backend response: {message}")]
    Malformed { message: String },
}

/// A chat backend usable from concurrent conversation drivers.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, exchange: &ChatExchange) -> Result<ChatResult, BackendError>;
}

pub type BackendHandle = Arc<dyn ChatBackend>;

/// Summed prompt/completion usage across exchanges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsageTotals {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl UsageTotals {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn add(&mut self, prompt: u64, completion: u64) {
        self.prompt_tokens += prompt;
        self.completion_tokens += completion;
    }
}

/// Sums reported usage over a run's results.
pub fn count_remote_usage(results: &[ChatResult]) -> UsageTotals {
    let mut totals = UsageTotals::default();
    for r in results {
        totals.add(r.prompt_tokens, r.completion_tokens);
    }
    totals
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(p: u64, c: u64) -> ChatResult {
        ChatResult {
            text: String::new(),
            prompt_tokens: p,
            completion_tokens: c,
            latency_ms: 0,
        }
    }

    #[test]
    fn usage_of_empty_list_is_zero() {
        assert_eq!(count_remote_usage(&[]), UsageTotals::default());
    }

    #[test]
    fn usage_sums_fields_independently() {
        let totals = count_remote_usage(&[result(3, 5), result(2, 2)]);
        assert_eq!(totals.prompt_tokens, 5);
        assert_eq!(totals.completion_tokens, 7);
        assert_eq!(totals.total(), 12);
    }

    #[test]
    fn usage_sums_many() {
        let results: Vec<_> = (0..10).map(|_| result(1, 1)).collect();
        let totals = count_remote_usage(&results);
        assert_eq!((totals.prompt_tokens, totals.completion_tokens), (10, 10));
    }
}
