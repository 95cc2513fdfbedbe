//! The conversation loop: pick a speaker, assemble its context, get its
//! output, append to the shared transcript, then rewrite that agent's memory
//! from the output. Runs end when the documentation agent speaks (finalized),
//! when the turn limit trips, or when a backend fails for good (aborted).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    BackendError, BackendHandle, ChatExchange, SamplingParams, UsageTotals,
};
use crate::context::{construct_context, ContextError, ContextPackage, TokenCounter};
use crate::eval::RunReport;
use crate::memory::{initial_memory, update_memory, MemoryState, MemoryTemplate, MemoryUpdateEvent};
use crate::transcript::{Transcript, TurnRecord};

use super::flags::{consensus_reached, detect_flags};
use super::scheduler::{
    roles, ConsensusSchedule, Phase, SchedulerError, SchedulerState, SelectionPolicy,
};

/// Whether memories are built, injected, and updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Per-agent structured memory in every context, updated after each turn.
    Intrinsic,
    /// Same roster and schedule with no memory anywhere.
    Baseline,
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Finalized,
    TurnLimit,
    Aborted,
}

/// One agent as wired into an engine.
pub struct EngineAgent {
    pub id: String,
    pub role_name: String,
    pub role_text: String,
    pub template: MemoryTemplate,
    pub backend: BackendHandle,
    /// Backend used for memory updates; defaults to the agent's own.
    pub update_backend: BackendHandle,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub run_id: String,
    pub scenario_name: String,
    pub mode: Mode,
    pub seed: u64,
    pub max_turns: u64,
    pub max_context_tokens: u64,
    pub counter: TokenCounter,
    pub update_retry_limit: u32,
    pub task: String,
    pub worker_order: Vec<String>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("invalid engine configuration: {0}")]
    Config(String),
}

/// A context package as persisted, tagged with the turn it served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnContext {
    pub turn_index: u64,
    pub speaker: String,
    #[serde(flatten)]
    pub package: ContextPackage,
}

/// An agent's memory after the update triggered by a global turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub agent_id: String,
    pub global_turn: u64,
    pub state: MemoryState,
}

/// Everything a finished (or aborted) run produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub transcript: Transcript,
    pub contexts: Vec<TurnContext>,
    pub snapshots: Vec<MemorySnapshot>,
}

pub struct ConversationEngine {
    config: EngineConfig,
    agents: BTreeMap<String, EngineAgent>,
    policy: Box<dyn SelectionPolicy + Send>,
    state: SchedulerState,
    transcript: Transcript,
    memories: BTreeMap<String, MemoryState>,
    events: Vec<MemoryUpdateEvent>,
    contexts: Vec<TurnContext>,
    snapshots: Vec<MemorySnapshot>,
    usage: UsageTotals,
    per_agent_usage: BTreeMap<String, UsageTotals>,
    consensus_turn: Option<u64>,
    final_document: String,
    outcome: Option<RunOutcome>,
}

impl ConversationEngine {
    pub fn new(config: EngineConfig, agents: Vec<EngineAgent>) -> Result<Self, EngineError> {
        if config.task.is_empty() {
            return Err(EngineError::Config("task text is empty".into()));
        }
        if config.worker_order.is_empty() {
            return Err(EngineError::Config("worker_order is empty".into()));
        }
        if config.max_turns == 0 {
            return Err(EngineError::Config("max_turns must be positive".into()));
        }

        let mut map = BTreeMap::new();
        for agent in agents {
            if map.contains_key(&agent.id) {
                return Err(EngineError::Config(format!(
                    "duplicate agent id '{}'",
                    agent.id
                )));
            }
            map.insert(agent.id.clone(), agent);
        }
        let mut required: Vec<&str> = vec![roles::CDA, roles::KIA, roles::EA, roles::DJE];
        required.extend(config.worker_order.iter().map(|s| s.as_str()));
        for id in required {
            if !map.contains_key(id) {
                return Err(EngineError::Config(format!(
                    "scheduler requires agent '{id}' but the roster does not define it"
                )));
            }
        }

        let memories = match config.mode {
            Mode::Intrinsic => map
                .values()
                .map(|a| (a.id.clone(), initial_memory(&a.template)))
                .collect(),
            Mode::Baseline => BTreeMap::new(),
        };

        let state = SchedulerState::new(config.worker_order.clone());
        let transcript = Transcript::new(config.task.clone());
        Ok(Self {
            config,
            agents: map,
            policy: Box::new(ConsensusSchedule),
            state,
            transcript,
            memories,
            events: Vec::new(),
            contexts: Vec::new(),
            snapshots: Vec::new(),
            usage: UsageTotals::default(),
            per_agent_usage: BTreeMap::new(),
            consensus_turn: None,
            final_document: String::new(),
            outcome: None,
        })
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn memory(&self, agent_id: &str) -> Option<&MemoryState> {
        self.memories.get(agent_id)
    }

    pub fn scheduler_state(&self) -> &SchedulerState {
        &self.state
    }

    pub fn update_events(&self) -> &[MemoryUpdateEvent] {
        &self.events
    }

    fn sampling(&self) -> SamplingParams {
        SamplingParams {
            temperature: 0.0,
            seed: Some(self.config.seed),
            max_output_tokens: None,
        }
    }

    /// Runs one turn: select, build context, complete, record, update memory.
    pub fn run_turn(&mut self) -> Result<TurnRecord, EngineError> {
        let (last_speaker, last_message) = match self.transcript.last_turn() {
            Some(turn) => (Some(turn.speaker.clone()), turn.output_text.clone()),
            None => (None, String::new()),
        };
        let speaker =
            self.policy
                .next_speaker(&mut self.state, last_speaker.as_deref(), &last_message)?;
        let agent = self
            .agents
            .get(&speaker)
            .ok_or_else(|| SchedulerError::UnknownSpeaker(speaker.clone()))?;

        let memory = match self.config.mode {
            Mode::Intrinsic => self.memories.get(&speaker),
            Mode::Baseline => None,
        };
        let package = construct_context(
            &self.transcript,
            memory,
            self.config.max_context_tokens,
            &self.config.counter,
        )?;

        let exchange = ChatExchange {
            system_text: agent.role_text.clone(),
            user_text: package.render_user_text(),
            sampling: self.sampling(),
        };
        let result = agent.backend.complete(&exchange)?;

        self.state.turn_counter += 1;
        let turn_index = self.state.turn_counter;
        let flags = detect_flags(&result.text);
        let record = TurnRecord {
            turn_index,
            speaker: speaker.clone(),
            role_name: agent.role_name.clone(),
            output_text: result.text.clone(),
            context_tokens: result.prompt_tokens,
            output_tokens: result.completion_tokens,
            flags,
        };

        self.usage.add(result.prompt_tokens, result.completion_tokens);
        self.per_agent_usage
            .entry(speaker.clone())
            .or_default()
            .add(result.prompt_tokens, result.completion_tokens);

        self.contexts.push(TurnContext {
            turn_index,
            speaker: speaker.clone(),
            package,
        });
        self.transcript.push(record.clone());

        if self.config.mode == Mode::Intrinsic {
            let agent = &self.agents[&speaker];
            let previous = self.memories[&speaker].clone();
            let (next, mut event) = update_memory(
                &speaker,
                &agent.role_name,
                &previous,
                &record.output_text,
                &agent.template,
                agent.update_backend.as_ref(),
                self.config.update_retry_limit,
                &self.sampling(),
            )?;
            event.global_turn = Some(turn_index);
            self.usage.add(event.prompt_tokens, event.completion_tokens);
            self.per_agent_usage
                .entry(speaker.clone())
                .or_default()
                .add(event.prompt_tokens, event.completion_tokens);
            self.snapshots.push(MemorySnapshot {
                agent_id: speaker.clone(),
                global_turn: turn_index,
                state: next.clone(),
            });
            self.events.push(event);
            self.memories.insert(speaker.clone(), next);
        }

        if self.consensus_turn.is_none()
            && consensus_reached(&self.transcript, &self.config.worker_order)
        {
            self.consensus_turn = Some(turn_index);
        }

        if speaker == roles::DJE {
            self.final_document = record.output_text.clone();
            self.state.phase = Phase::Done;
            self.outcome = Some(RunOutcome::Finalized);
        }

        Ok(record)
    }

    /// Drives the conversation to completion and hands back its artifacts.
    /// Backend failures end the run with `outcome = aborted` and the error
    /// message recorded; everything produced up to that point is kept.
    pub fn run(mut self) -> RunArtifacts {
        let mut error = None;
        loop {
            if self.state.phase == Phase::Done {
                break;
            }
            if self.state.turn_counter >= self.config.max_turns {
                self.state.phase = Phase::Done;
                self.outcome = Some(RunOutcome::TurnLimit);
                break;
            }
            match self.run_turn() {
                Ok(_) => {}
                Err(e) => {
                    log::warn!("run {} aborted: {e}", self.config.run_id);
                    error = Some(e.to_string());
                    self.state.phase = Phase::Done;
                    self.outcome = Some(RunOutcome::Aborted);
                    break;
                }
            }
        }
        self.into_artifacts(error)
    }

    fn into_artifacts(self, error: Option<String>) -> RunArtifacts {
        let outcome = self.outcome.unwrap_or(RunOutcome::TurnLimit);
        let report = RunReport {
            run_id: self.config.run_id.clone(),
            scenario_name: self.config.scenario_name.clone(),
            mode: self.config.mode,
            seed: self.config.seed,
            outcome,
            error,
            total_turns: self.state.turn_counter,
            consensus_turn: self.consensus_turn,
            total_tokens: self.usage.total(),
            usage: self.usage,
            per_agent_tokens: self.per_agent_usage,
            memory_update_events: self.events,
            final_document: self.final_document,
            scorecard: None,
        };
        RunArtifacts {
            report,
            transcript: self.transcript,
            contexts: self.contexts,
            snapshots: self.snapshots,
        }
    }
}
