//! Conversation orchestration: the selection schedule, flag handling, and the
//! engine that drives a run from first turn to finalized document.

mod engine;
mod flags;
mod scheduler;

pub use engine::{
    ConversationEngine, EngineAgent, EngineConfig, EngineError, MemorySnapshot, Mode,
    RunArtifacts, RunOutcome, TurnContext,
};
pub use flags::{consensus_reached, detect_flags};
pub use scheduler::{
    roles, ConsensusSchedule, Phase, SchedulerError, SchedulerState, SelectionPolicy,
};
