//! Conclave drives consensus-oriented conversations between role-playing LLM
//! agents. Each agent keeps its own slot-structured memory that is rewritten
//! from the agent's latest output after every turn it takes, and each turn's
//! prompt is assembled under a token budget from the task description, the
//! agent's memory, and the most recent turns that fit.
//!
//! The crate is organised around the run lifecycle:
//!
//! - [`memory`] — slot templates, memory states, and the intrinsic update
//! - [`context`] — token counting and budgeted context assembly
//! - [`backend`] — scripted and HTTP chat backends behind one trait
//! - [`orchestrator`] — turn scheduling, flag handling, the conversation loop
//! - [`eval`] — judge scoring, rank-sum statistics, run summaries
//! - [`scenario`] / [`persist`] — config loading and run artifacts
//!
//! The `parallel` feature (on by default) uses rayon for batch runs and for
//! the exact rank-sum enumeration; without it everything runs sequentially.

pub mod backend;
pub mod context;
pub mod eval;
pub mod memory;
pub mod orchestrator;
pub mod persist;
pub mod scenario;
pub mod transcript;

mod canonical;

pub use backend::{BackendError, BackendHandle, ChatBackend, ChatExchange, ChatResult};
pub use context::{ContextPackage, TokenCounter};
pub use eval::RunReport;
pub use memory::{MemoryState, MemoryTemplate, MemoryUpdateEvent, UpdateOutcome};
pub use orchestrator::{ConversationEngine, Mode, RunArtifacts, RunOutcome};
pub use scenario::{load_scenario, Scenario, ScenarioFile};
pub use transcript::{Flag, Transcript, TurnRecord};
