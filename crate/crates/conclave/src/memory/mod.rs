//! Template-constrained agent memory: slot templates, memory states, and the
//! intrinsic update that rewrites a memory from the agent's own output.

mod state;
mod template;
mod update;

pub use state::{
    initial_memory, normalize_order, validate_content, validate_state, MemoryState,
    ValidationResult, Violation, ViolationKind,
};
pub use template::{MemoryTemplate, SlotSpec, TemplateError};
pub use update::{render_update_prompt, update_memory, MemoryUpdateEvent, UpdateOutcome};
