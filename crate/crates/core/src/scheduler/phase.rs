//! The three-phase state machine.
//!
//! Rules, applied after folding the step's events into the clock:
//! a newly traversed function always puts the campaign in inter-function
//! exploration; otherwise each phase times out into the next once its event
//! has been quiet for its window. Windows are measured from the later of the
//! last relevant event and the moment the phase was entered, so every phase
//! dwells for at least its own window.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ranking::UpdateSummary;
use crate::scheduler::SchedulerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    InterExplore,
    IntraExplore,
    Exploit,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::InterExplore => "INTER_EXPLORE",
            Phase::IntraExplore => "INTRA_EXPLORE",
            Phase::Exploit => "EXPLOIT",
        }
    }

    pub fn is_exploration(self) -> bool {
        self != Phase::Exploit
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "INTER_EXPLORE" => Ok(Phase::InterExplore),
            "INTRA_EXPLORE" => Ok(Phase::IntraExplore),
            "EXPLOIT" => Ok(Phase::Exploit),
            other => Err(format!("unknown phase `{other}`")),
        }
    }
}

/// What drove a timeline entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseEvent {
    NewFunction,
    NewReach,
    NewTrigger,
    Timeout,
}

impl PhaseEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseEvent::NewFunction => "new_function",
            PhaseEvent::NewReach => "new_reach",
            PhaseEvent::NewTrigger => "new_trigger",
            PhaseEvent::Timeout => "timeout",
        }
    }
}

impl FromStr for PhaseEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "new_function" => Ok(PhaseEvent::NewFunction),
            "new_reach" => Ok(PhaseEvent::NewReach),
            "new_trigger" => Ok(PhaseEvent::NewTrigger),
            "timeout" => Ok(PhaseEvent::Timeout),
            other => Err(format!("unknown phase event `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseClock {
    pub last_new_function: u64,
    pub last_new_target_reached: u64,
    pub last_new_target_triggered: u64,
    pub phase_entered_at: u64,
}

impl PhaseClock {
    pub fn starting_at(now: u64) -> Self {
        PhaseClock {
            last_new_function: now,
            last_new_target_reached: now,
            last_new_target_triggered: now,
            phase_entered_at: now,
        }
    }

    /// Fold one execution's events into the clock.
    pub fn observe(&mut self, now: u64, summary: &UpdateSummary) {
        if summary.new_functions > 0 {
            self.last_new_function = self.last_new_function.max(now);
        }
        if summary.newly_reached > 0 {
            self.last_new_target_reached = self.last_new_target_reached.max(now);
        }
        if summary.newly_triggered > 0 {
            self.last_new_target_triggered = self.last_new_target_triggered.max(now);
        }
    }
}

fn quiet_for(now: u64, last_event: u64, entered: u64) -> u64 {
    now.saturating_sub(last_event.max(entered))
}

/// Advance the phase machine by one observation. Deterministic in its inputs;
/// replaying the same `(now, summary)` sequence reproduces the same timeline.
pub fn phase_step(
    phase: Phase,
    clock: &mut PhaseClock,
    now: u64,
    cfg: &SchedulerConfig,
    summary: &UpdateSummary,
) -> Phase {
    clock.observe(now, summary);
    let next = if summary.new_functions > 0 {
        Phase::InterExplore
    } else {
        match phase {
            Phase::InterExplore
                if quiet_for(now, clock.last_new_function, clock.phase_entered_at) >= cfg.w_function =>
            {
                Phase::IntraExplore
            }
            Phase::IntraExplore
                if quiet_for(now, clock.last_new_target_reached, clock.phase_entered_at) >= cfg.w_reach =>
            {
                Phase::Exploit
            }
            Phase::Exploit
                if quiet_for(now, clock.last_new_target_triggered, clock.phase_entered_at)
                    >= cfg.w_trigger =>
            {
                cfg.exploit_timeout_to
            }
            p => p,
        }
    };
    if next != phase {
        clock.phase_entered_at = now;
    }
    next
}

/// The event that best explains a step: a transition caused by a new
/// function, a timeout, or otherwise the most significant event observed.
pub fn classify_event(before: Phase, after: Phase, summary: &UpdateSummary) -> Option<PhaseEvent> {
    if summary.new_functions > 0 {
        return Some(PhaseEvent::NewFunction);
    }
    if before != after {
        return Some(PhaseEvent::Timeout);
    }
    if summary.newly_triggered > 0 {
        Some(PhaseEvent::NewTrigger)
    } else if summary.newly_reached > 0 {
        Some(PhaseEvent::NewReach)
    } else {
        None
    }
}
