//! The shared conversation record: the task description followed by one
//! append-only entry per turn.

use serde::{Deserialize, Serialize};

/// In-text control markers scanned out of every output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Flag {
    #[serde(rename = "ACCEPT")]
    Accept,
    #[serde(rename = "FINALIZE")]
    Finalize,
}

/// One turn as persisted to the transcript JSONL.
///
/// `context_tokens` / `output_tokens` are the backend-reported usage for the
/// turn's exchange (0 when the backend reports none); budget estimates live in
/// the persisted context packages instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn_index: u64,
    pub speaker: String,
    pub role_name: String,
    pub output_text: String,
    pub context_tokens: u64,
    pub output_tokens: u64,
    pub flags: Vec<Flag>,
}

impl TurnRecord {
    /// The turn as it appears in conversation history handed to agents.
    pub fn rendered(&self) -> String {
        format!("[{}]: {}", self.role_name, self.output_text)
    }
}

/// Task description plus turns, in order. Turn indices are dense from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    task: String,
    turns: Vec<TurnRecord>,
}

impl Transcript {
    pub fn new(task: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            turns: Vec::new(),
        }
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn turns(&self) -> &[TurnRecord] {
        &self.turns
    }

    pub fn last_turn(&self) -> Option<&TurnRecord> {
        self.turns.last()
    }

    /// Appends a turn, enforcing dense 1-based indices.
    pub fn push(&mut self, turn: TurnRecord) {
        debug_assert_eq!(turn.turn_index, self.turns.len() as u64 + 1);
        self.turns.push(turn);
    }

    /// Entries as counted by the context builder: the task is entry 0.
    pub fn len_with_task(&self) -> usize {
        self.turns.len() + 1
    }
}
