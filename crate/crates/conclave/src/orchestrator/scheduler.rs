//! Deterministic speaker selection.
//!
//! The conversation alternates the coordinator (CDA) with the worker roster in
//! round-robin order. After a full worker cycle the knowledge integrator (KIA)
//! summarizes, the evaluator (EA) reviews, and control returns to the CDA. A
//! finalize flag in the last message routes straight to the documentation
//! agent (DJE), whose turn ends the run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::Flag;

use super::flags::detect_flags;

/// Canonical agent ids for the shipped roster. Configs may use the aliases
/// `MLA` (for `MLE`) and `ERA` (for `EA`).
pub mod roles {
    /// Evaluation Agent.
    pub const EA: &str = "EA";
    /// Knowledge Integration Agent.
    pub const KIA: &str = "KIA";
    /// Data Engineer Agent.
    pub const DEA: &str = "DEA";
    /// Infrastructure Engineer.
    pub const IA: &str = "IA";
    /// Business Objective Engineer.
    pub const BOA: &str = "BOA";
    /// Machine Learning Engineer.
    pub const MLE: &str = "MLE";
    /// Conversation Delegation Agent.
    pub const CDA: &str = "CDA";
    /// Documentation Joining Agent.
    pub const DJE: &str = "DJE";

    pub const DEFAULT_WORKER_ORDER: [&str; 4] = [BOA, DEA, MLE, IA];

    /// Maps legacy alias ids onto canonical ones.
    pub fn canonical(id: &str) -> &str {
        match id {
            "MLA" => MLE,
            "ERA" => EA,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Discussing,
    Finalizing,
    Done,
}

/// Mutable scheduling state for one conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub worker_order: Vec<String>,
    pub worker_counter: u64,
    pub turn_counter: u64,
    pub phase: Phase,
}

impl SchedulerState {
    pub fn new(worker_order: Vec<String>) -> Self {
        Self {
            worker_order,
            worker_counter: 0,
            turn_counter: 0,
            phase: Phase::Discussing,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("unknown last speaker '{0}'")]
    UnknownSpeaker(String),
    #[error("scheduler already done")]
    Done,
}

/// A speaker-selection rule. Only [`ConsensusSchedule`] ships, but the policy
/// is a trait so alternatives can be slotted in.
pub trait SelectionPolicy {
    fn next_speaker(
        &self,
        state: &mut SchedulerState,
        last_speaker: Option<&str>,
        last_message: &str,
    ) -> Result<String, SchedulerError>;
}

/// The shipped schedule: CDA-interleaved worker round-robin with KIA/EA
/// checkpoints and flag-triggered finalization.
#[derive(Debug, Default, Clone, Copy)]
pub struct ConsensusSchedule;

impl SelectionPolicy for ConsensusSchedule {
    fn next_speaker(
        &self,
        state: &mut SchedulerState,
        last_speaker: Option<&str>,
        last_message: &str,
    ) -> Result<String, SchedulerError> {
        if state.phase == Phase::Done {
            return Err(SchedulerError::Done);
        }

        if detect_flags(last_message).contains(&Flag::Finalize) {
            state.phase = Phase::Finalizing;
            return Ok(roles::DJE.to_string());
        }

        let last = match last_speaker {
            None => return Ok(roles::CDA.to_string()),
            Some(id) => id,
        };

        let workers = &state.worker_order;
        if last == roles::CDA {
            let next = workers[(state.worker_counter % workers.len() as u64) as usize].clone();
            state.worker_counter += 1;
            Ok(next)
        } else if workers.iter().any(|w| w == last) {
            if state.worker_counter % workers.len() as u64 == 0 {
                Ok(roles::KIA.to_string())
            } else {
                Ok(roles::CDA.to_string())
            }
        } else if last == roles::KIA {
            Ok(roles::EA.to_string())
        } else if last == roles::EA {
            Ok(roles::CDA.to_string())
        } else if last == roles::DJE {
            // DJE's turn ends the conversation; being asked again is a bug.
            Err(SchedulerError::Done)
        } else {
            Err(SchedulerError::UnknownSpeaker(last.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::roles::*;
    use super::*;

    fn state() -> SchedulerState {
        SchedulerState::new(DEFAULT_WORKER_ORDER.iter().map(|s| s.to_string()).collect())
    }

    fn next(
        state: &mut SchedulerState,
        last: Option<&str>,
        message: &str,
    ) -> Result<String, SchedulerError> {
        ConsensusSchedule.next_speaker(state, last, message)
    }

    #[test]
    fn conversation_starts_with_cda() {
        assert_eq!(next(&mut state(), None, "").unwrap(), CDA);
    }

    #[test]
    fn cda_hands_to_workers_in_order() {
        let mut s = state();
        assert_eq!(next(&mut s, Some(CDA), "go").unwrap(), BOA);
        assert_eq!(s.worker_counter, 1);
        assert_eq!(next(&mut s, Some(CDA), "go").unwrap(), DEA);
        assert_eq!(next(&mut s, Some(CDA), "go").unwrap(), MLE);
        assert_eq!(next(&mut s, Some(CDA), "go").unwrap(), IA);
        assert_eq!(next(&mut s, Some(CDA), "go").unwrap(), BOA);
    }

    #[test]
    fn worker_routes_to_kia_only_after_a_full_cycle() {
        let mut s = state();
        s.worker_counter = 4;
        assert_eq!(next(&mut s, Some(IA), "done").unwrap(), KIA);
        let mut s = state();
        s.worker_counter = 3;
        assert_eq!(next(&mut s, Some(MLE), "done").unwrap(), CDA);
    }

    #[test]
    fn kia_to_ea_to_cda() {
        let mut s = state();
        assert_eq!(next(&mut s, Some(KIA), "summary").unwrap(), EA);
        assert_eq!(next(&mut s, Some(EA), "review").unwrap(), CDA);
    }

    #[test]
    fn finalize_flag_routes_to_dje_regardless_of_speaker() {
        for speaker in [CDA, BOA, KIA, EA] {
            let mut s = state();
            let picked = next(&mut s, Some(speaker), "we are done, FINALIZE").unwrap();
            assert_eq!(picked, DJE);
            assert_eq!(s.phase, Phase::Finalizing);
        }
    }

    #[test]
    fn finalization_spelling_also_routes_to_dje() {
        let mut s = state();
        assert_eq!(next(&mut s, Some(CDA), "FINALIZATION ready").unwrap(), DJE);
    }

    #[test]
    fn unknown_speaker_is_an_error() {
        let mut s = state();
        assert_eq!(
            next(&mut s, Some("GHOST"), "hello").unwrap_err(),
            SchedulerError::UnknownSpeaker("GHOST".into())
        );
    }

    #[test]
    fn done_phase_rejects_selection() {
        let mut s = state();
        s.phase = Phase::Done;
        assert_eq!(next(&mut s, Some(CDA), "").unwrap_err(), SchedulerError::Done);
    }

    #[test]
    fn aliases_map_to_canonical_ids() {
        assert_eq!(canonical("MLA"), MLE);
        assert_eq!(canonical("ERA"), EA);
        assert_eq!(canonical("BOA"), BOA);
    }
}
