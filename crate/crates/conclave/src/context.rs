//! Budgeted context assembly.
//!
//! A context package always contains the task description and (in memory-backed
//! runs) the agent's memory block. Conversation turns are then added newest to
//! oldest, each whole turn taken only if it fits the remaining budget, stopping
//! at the first turn that does not fit. The result is a contiguous suffix of
//! the history in chronological order. The task and memory are never truncated;
//! if the two of them alone exceed the budget the package is flagged
//! `over_budget` and carries no turns.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::to_canonical_string;
use crate::memory::MemoryState;
use crate::transcript::{Transcript, TurnRecord};

pub const MEMORY_BLOCK_PREFIX: &str = "Your structured memory:";

/// Deterministic pre-call token counting. Budget decisions must happen before
/// a request is sent, so every mode counts from the text alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TokenCounter {
    /// `ceil(bytes / 4)`.
    DefaultHeuristic,
    /// Counts like the default heuristic; signals that run accounting should
    /// prefer endpoint-reported usage where available.
    BackendReported,
    /// `ceil(bytes / bytes_per_token)`.
    Custom { bytes_per_token: std::num::NonZeroU32 },
}

impl Default for TokenCounter {
    fn default() -> Self {
        TokenCounter::DefaultHeuristic
    }
}

impl TokenCounter {
    pub fn count(&self, text: &str) -> u64 {
        let divisor = match self {
            TokenCounter::DefaultHeuristic | TokenCounter::BackendReported => 4,
            TokenCounter::Custom { bytes_per_token } => u64::from(bytes_per_token.get()),
        };
        (text.len() as u64).div_ceil(divisor)
    }
}

/// The assembled input for one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPackage {
    pub task: String,
    /// Serialized memory block; absent in memory-less runs.
    pub memory_block: Option<String>,
    /// Chronological contiguous suffix of the history after the task entry.
    pub recent_turns: Vec<TurnRecord>,
    /// Counted tokens of everything included.
    pub total_tokens: u64,
    /// True when task + memory alone exceed the budget.
    pub over_budget: bool,
}

impl ContextPackage {
    /// Flattens the package into the single user prompt handed to a backend:
    /// task, memory block, then turns, blank-line separated.
    pub fn render_user_text(&self) -> String {
        let mut sections = Vec::with_capacity(3);
        sections.push(self.task.clone());
        if let Some(block) = &self.memory_block {
            sections.push(block.clone());
        }
        if !self.recent_turns.is_empty() {
            let turns: Vec<String> = self.recent_turns.iter().map(|t| t.rendered()).collect();
            sections.push(turns.join("\n"));
        }
        sections.join("\n\n")
    }
}

/// Renders a memory state into its in-context block: a fixed prefix line, then
/// the content as canonical JSON (sorted keys).
pub fn memory_block(memory: &MemoryState) -> String {
    format!(
        "{MEMORY_BLOCK_PREFIX}\n{}",
        to_canonical_string(&Value::Object(memory.content.clone()))
    )
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("conversation history has no task entry")]
    EmptyTask,
    #[error("max_tokens must be positive")]
    ZeroBudget,
}

/// Assembles the context for a turn. See the module docs for the packing rule.
pub fn construct_context(
    history: &Transcript,
    memory: Option<&MemoryState>,
    max_tokens: u64,
    counter: &TokenCounter,
) -> Result<ContextPackage, ContextError> {
    if history.task().is_empty() {
        return Err(ContextError::EmptyTask);
    }
    if max_tokens == 0 {
        return Err(ContextError::ZeroBudget);
    }

    let block = memory.map(memory_block);
    let mut used = counter.count(history.task());
    if let Some(block) = &block {
        used += counter.count(block);
    }

    if used > max_tokens {
        log::warn!(
            "task and memory alone use {used} tokens against a budget of {max_tokens}; \
             no conversation turns included"
        );
        return Ok(ContextPackage {
            task: history.task().to_string(),
            memory_block: block,
            recent_turns: Vec::new(),
            total_tokens: used,
            over_budget: true,
        });
    }

    let mut remaining = max_tokens - used;
    let mut picked: Vec<&TurnRecord> = Vec::new();
    for turn in history.turns().iter().rev() {
        let turn_tokens = counter.count(&turn.rendered());
        if turn_tokens <= remaining {
            remaining -= turn_tokens;
            used += turn_tokens;
            picked.push(turn);
        } else {
            break;
        }
    }
    picked.reverse();

    Ok(ContextPackage {
        task: history.task().to_string(),
        memory_block: block,
        recent_turns: picked.into_iter().cloned().collect(),
        total_tokens: used,
        over_budget: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{initial_memory, MemoryTemplate};
    use proptest::prelude::*;
    use serde_json::json;

    fn counter() -> TokenCounter {
        TokenCounter::DefaultHeuristic
    }

    fn turn(i: u64, text: &str) -> TurnRecord {
        TurnRecord {
            turn_index: i,
            speaker: "A".into(),
            role_name: "A".into(),
            output_text: text.into(),
            context_tokens: 0,
            output_tokens: 0,
            flags: vec![],
        }
    }

    fn transcript_with(task: &str, texts: &[&str]) -> Transcript {
        let mut t = Transcript::new(task);
        for (i, text) in texts.iter().enumerate() {
            t.push(turn(i as u64 + 1, text));
        }
        t
    }

    #[test]
    fn count_examples() {
        let c = counter();
        assert_eq!(c.count(""), 0);
        assert_eq!(c.count("abcd"), 1);
        assert_eq!(c.count("hello world"), 3); // ceil(11/4)
    }

    #[test]
    fn count_uses_bytes_not_chars() {
        let c = counter();
        // 3 chars, 7 bytes
        assert_eq!(c.count("aé中"), 2);
    }

    #[test]
    fn custom_divisor() {
        let c = TokenCounter::Custom {
            bytes_per_token: std::num::NonZeroU32::new(2).unwrap(),
        };
        assert_eq!(c.count("abcde"), 3);
    }

    #[test]
    fn task_only_history_yields_empty_turns() {
        let history = transcript_with("do the thing", &[]);
        let template = MemoryTemplate::from_json("t", &json!({"s": "d"})).unwrap();
        let memory = initial_memory(&template);
        let package = construct_context(&history, Some(&memory), 10_000, &counter()).unwrap();
        assert!(package.recent_turns.is_empty());
        assert!(!package.over_budget);
        assert_eq!(package.task, "do the thing");
        assert!(package.memory_block.unwrap().starts_with(MEMORY_BLOCK_PREFIX));
    }

    #[test]
    fn breaks_at_first_turn_that_does_not_fit() {
        // Budget after task+memory fits t3 and t2 but not t1.
        let task = "T"; // 1 token
        let t1 = "x".repeat(400); // 100 tokens
        let t2 = "y".repeat(40); // rendered adds "[A]: " (5 bytes)
        let t3 = "z".repeat(40);
        let history = transcript_with(task, &[&t1, &t2, &t3]);
        let c = counter();
        let per_small_turn = c.count(&history.turns()[1].rendered());
        let budget = c.count(task) + 2 * per_small_turn;
        let package = construct_context(&history, None, budget, &c).unwrap();
        let texts: Vec<&str> = package
            .recent_turns
            .iter()
            .map(|t| t.output_text.as_str())
            .collect();
        assert_eq!(texts, vec![t2.as_str(), t3.as_str()]);
        assert!(package.total_tokens <= budget);
    }

    #[test]
    fn over_budget_task_and_memory_are_still_included() {
        let task = "t".repeat(40); // 10 tokens
        let template = MemoryTemplate::from_json("t", &json!({"s": "d"})).unwrap();
        let mut memory = initial_memory(&template);
        memory.content["s"] = json!("m".repeat(40));
        let history = transcript_with(&task, &["turn one"]);
        let package = construct_context(&history, Some(&memory), 10, &counter()).unwrap();
        assert!(package.over_budget);
        assert!(package.recent_turns.is_empty());
        assert_eq!(package.task, task);
        assert!(package.memory_block.is_some());
        assert!(package.total_tokens > 10);
    }

    #[test]
    fn empty_task_is_rejected() {
        let history = transcript_with("", &[]);
        assert_eq!(
            construct_context(&history, None, 10, &counter()).unwrap_err(),
            ContextError::EmptyTask
        );
    }

    #[test]
    fn zero_budget_is_rejected() {
        let history = transcript_with("task", &[]);
        assert_eq!(
            construct_context(&history, None, 0, &counter()).unwrap_err(),
            ContextError::ZeroBudget
        );
    }

    #[test]
    fn memory_block_is_prefix_plus_canonical_json() {
        let template =
            MemoryTemplate::from_json("t", &json!({"b": "d2", "a": "d1"})).unwrap();
        let memory = initial_memory(&template);
        assert_eq!(
            memory_block(&memory),
            "Your structured memory:\n{\"a\":\"\",\"b\":\"\"}"
        );
    }

    #[test]
    fn render_user_text_orders_task_memory_turns() {
        let template = MemoryTemplate::from_json("t", &json!({"a": "d"})).unwrap();
        let memory = initial_memory(&template);
        let history = transcript_with("the task", &["first", "second"]);
        let package = construct_context(&history, Some(&memory), 10_000, &counter()).unwrap();
        let text = package.render_user_text();
        assert_eq!(
            text,
            "the task\n\nYour structured memory:\n{\"a\":\"\"}\n\n[A]: first\n[A]: second"
        );
    }

    // Brute-force reference: try every suffix of the turn list, longest first,
    // and take the first whose total fits the residual budget.
    fn oracle_suffix_len(
        history: &Transcript,
        memory: Option<&MemoryState>,
        max_tokens: u64,
        counter: &TokenCounter,
    ) -> Option<usize> {
        let mut base = counter.count(history.task());
        if let Some(m) = memory {
            base += counter.count(&memory_block(m));
        }
        if base > max_tokens {
            return None; // over budget
        }
        let n = history.turns().len();
        for keep in (0..=n).rev() {
            let total: u64 = history.turns()[n - keep..]
                .iter()
                .map(|t| counter.count(&t.rendered()))
                .sum();
            if base + total <= max_tokens {
                return Some(keep);
            }
        }
        unreachable!("keep = 0 always fits once base fits");
    }

    proptest! {
        #[test]
        fn matches_longest_fitting_suffix_oracle(
            task in "[a-z]{1,40}",
            texts in prop::collection::vec("[a-z ]{0,60}", 0..12),
            budget in 1u64..120,
        ) {
            let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
            let history = transcript_with(&task, &refs);
            let c = counter();
            let package = construct_context(&history, None, budget, &c).unwrap();
            match oracle_suffix_len(&history, None, budget, &c) {
                None => {
                    prop_assert!(package.over_budget);
                    prop_assert!(package.recent_turns.is_empty());
                }
                Some(keep) => {
                    prop_assert!(!package.over_budget);
                    prop_assert_eq!(package.recent_turns.len(), keep);
                    let expected: Vec<_> = history.turns()[history.turns().len() - keep..].to_vec();
                    prop_assert_eq!(package.recent_turns, expected);
                }
            }
        }

        #[test]
        fn memory_is_always_present(
            task in "[a-z]{1,20}",
            texts in prop::collection::vec("[a-z ]{0,40}", 0..8),
            budget in 1u64..60,
            leaf in "[a-z]{0,80}",
        ) {
            let template = MemoryTemplate::from_json("t", &json!({"s": "d"})).unwrap();
            let mut memory = initial_memory(&template);
            memory.content["s"] = json!(leaf);
            let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
            let history = transcript_with(&task, &refs);
            let package = construct_context(&history, Some(&memory), budget, &counter()).unwrap();
            prop_assert!(package.memory_block.is_some());
            prop_assert!(package.memory_block.unwrap().contains(&leaf));
        }

        #[test]
        fn larger_budget_never_shortens_the_suffix(
            task in "[a-z]{1,20}",
            texts in prop::collection::vec("[a-z ]{0,40}", 0..10),
            budget in 1u64..100,
            extra in 0u64..50,
        ) {
            let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
            let history = transcript_with(&task, &refs);
            let c = counter();
            let small = construct_context(&history, None, budget, &c).unwrap();
            let large = construct_context(&history, None, budget + extra, &c).unwrap();
            prop_assert!(large.recent_turns.len() >= small.recent_turns.len());
        }
    }
}
