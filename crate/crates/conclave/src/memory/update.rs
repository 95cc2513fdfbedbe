//! The intrinsic memory update: rewrite an agent's memory from its own latest
//! output plus its previous memory, via a fixed prompt sent to a chat backend.
//!
//! The backend's reply must parse as a JSON object and mirror the agent's
//! template exactly. Anything else is retried up to the caller's limit; after
//! that the previous memory is kept. A stale memory is preferable to a
//! corrupted one, so there is no projection of near-miss responses onto the
//! template.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{BackendError, ChatBackend, ChatExchange, SamplingParams};

use super::state::{normalize_order, validate_content, MemoryState};
use super::template::MemoryTemplate;

const UPDATE_PROMPT_HEADER: &str = "You are maintaining the memory of an agent working as ";
const UPDATE_PROMPT_BODY: &str = " in a multi-agent conversation.
Use the old memory and the newest output by the agent to populate and update the current memory json with factual information.

For context, old memory content:

";
const UPDATE_PROMPT_OUTPUT_LABEL: &str = "

Current content generated by the agent:

";
const UPDATE_PROMPT_FOOTER: &str = "

Update the memory content to incorporate new information while preserving key historical context.
The updated content should be concise and focus on information relevant to both the old memory and the newly generated output.";

/// Renders the fixed update prompt with the role name, the previous memory
/// content as compact JSON, and the agent's raw output substituted in. Each
/// payload appears exactly once.
pub fn render_update_prompt(role: &str, previous: &MemoryState, output: &str) -> String {
    let mut prompt = String::with_capacity(
        UPDATE_PROMPT_HEADER.len()
            + UPDATE_PROMPT_BODY.len()
            + UPDATE_PROMPT_OUTPUT_LABEL.len()
            + UPDATE_PROMPT_FOOTER.len()
            + role.len()
            + output.len()
            + 64,
    );
    prompt.push_str(UPDATE_PROMPT_HEADER);
    prompt.push_str(role);
    prompt.push_str(UPDATE_PROMPT_BODY);
    prompt.push_str(&previous.content_json());
    prompt.push_str(UPDATE_PROMPT_OUTPUT_LABEL);
    prompt.push_str(output);
    prompt.push_str(UPDATE_PROMPT_FOOTER);
    prompt
}

/// How an update attempt concluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOutcome {
    /// First response was valid and applied.
    Applied,
    /// A retry produced a valid response.
    RetriedThenApplied,
    /// All attempts failed validation; the previous content was kept.
    RejectedKeptPrevious,
}

/// Observability record for one memory update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryUpdateEvent {
    pub agent_id: String,
    /// The updated state's per-agent turn index.
    pub turn_index: u64,
    /// Global conversation turn that triggered the update, when known.
    pub global_turn: Option<u64>,
    pub outcome: UpdateOutcome,
    pub attempts: u32,
    /// The last backend response seen (the accepted one, or the final reject).
    pub raw_response: String,
    /// Usage summed across all attempts, zero when the backend reports none.
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Runs one intrinsic update for `agent_id` through `backend`.
///
/// On a valid response the parsed content becomes the new state; otherwise up
/// to `retry_limit` further attempts are made with the same prompt. After
/// exhaustion the previous content is kept. In every case the returned state's
/// `turn_index` is `previous.turn_index + 1` and it validates against
/// `template`. Transport failures are errors, not rejections.
pub fn update_memory(
    agent_id: &str,
    role: &str,
    previous: &MemoryState,
    output: &str,
    template: &MemoryTemplate,
    backend: &dyn ChatBackend,
    retry_limit: u32,
    sampling: &SamplingParams,
) -> Result<(MemoryState, MemoryUpdateEvent), BackendError> {
    let prompt = render_update_prompt(role, previous, output);
    let exchange = ChatExchange {
        system_text: String::new(),
        user_text: prompt,
        sampling: sampling.clone(),
    };

    let mut prompt_tokens = 0u64;
    let mut completion_tokens = 0u64;
    let mut last_response = String::new();

    let max_attempts = retry_limit + 1;
    for attempt in 1..=max_attempts {
        let result = backend.complete(&exchange)?;
        prompt_tokens += result.prompt_tokens;
        completion_tokens += result.completion_tokens;
        last_response = result.text;

        if let Some(content) = parse_conforming(&last_response, template) {
            let outcome = if attempt == 1 {
                UpdateOutcome::Applied
            } else {
                UpdateOutcome::RetriedThenApplied
            };
            let state = MemoryState {
                template_id: previous.template_id.clone(),
                turn_index: previous.turn_index + 1,
                content,
            };
            let event = MemoryUpdateEvent {
                agent_id: agent_id.to_string(),
                turn_index: state.turn_index,
                global_turn: None,
                outcome,
                attempts: attempt,
                raw_response: last_response,
                prompt_tokens,
                completion_tokens,
            };
            return Ok((state, event));
        }
    }

    let state = MemoryState {
        template_id: previous.template_id.clone(),
        turn_index: previous.turn_index + 1,
        content: previous.content.clone(),
    };
    let event = MemoryUpdateEvent {
        agent_id: agent_id.to_string(),
        turn_index: state.turn_index,
        global_turn: None,
        outcome: UpdateOutcome::RejectedKeptPrevious,
        attempts: max_attempts,
        raw_response: last_response,
        prompt_tokens,
        completion_tokens,
    };
    Ok((state, event))
}

/// Parses `text` as a JSON object conforming to `template`, returning the
/// content normalized to template slot order. The whole trimmed response must
/// be the object; no extraction from surrounding prose.
fn parse_conforming(
    text: &str,
    template: &MemoryTemplate,
) -> Option<serde_json::Map<String, Value>> {
    let value: Value = serde_json::from_str(text.trim()).ok()?;
    let map = value.as_object()?;
    if validate_content(map, template).is_ok() {
        Some(normalize_order(map, template))
    } else {
        None
    }
}
