//! Deterministic backend that replays a fixed response queue. The test and
//! fixture bedrock: with scripted backends an entire run is byte-for-byte
//! reproducible.

use std::collections::VecDeque;
use std::sync::Mutex;

use super::{BackendError, ChatBackend, ChatExchange, ChatResult};

pub struct ScriptedBackend {
    key: String,
    queue: Mutex<VecDeque<String>>,
    served: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(responses: Vec<String>) -> Self {
        Self::with_key("scripted", responses)
    }

    /// `key` names the queue in exhaustion errors (typically the backend's
    /// config name or an agent id).
    pub fn with_key(key: impl Into<String>, responses: Vec<String>) -> Self {
        Self {
            key: key.into(),
            queue: Mutex::new(responses.into()),
            served: Mutex::new(0),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("queue lock").len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, _exchange: &ChatExchange) -> Result<ChatResult, BackendError> {
        let mut queue = self.queue.lock().expect("queue lock");
        match queue.pop_front() {
            Some(text) => {
                *self.served.lock().expect("served lock") += 1;
                Ok(ChatResult {
                    text,
                    prompt_tokens: 0,
                    completion_tokens: 0,
                    latency_ms: 0,
                })
            }
            None => Err(BackendError::ScriptExhausted {
                key: self.key.clone(),
                served: *self.served.lock().expect("served lock"),
            }),
        }
    }
}
