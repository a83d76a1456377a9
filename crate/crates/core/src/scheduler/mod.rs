//! Queue culling and phase control.
//!
//! Each phase has its own cull pass. A pass always clears every favor flag
//! before setting any, so the favored set after a pass is exactly that pass's
//! selection.

mod cull;
mod phase;

pub use cull::{
    exploitation_cull, exploitation_cull_with, inter_function_cull, inter_function_cull_with,
    intra_function_cull, select_next_seed,
};
pub use phase::{classify_event, phase_step, Phase, PhaseClock, PhaseEvent};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::execution::ExecutionTrace;
use crate::graph::ProgramGraph;
use crate::ids::FunctionId;

/// Virtual ticks standing in for one minute of wall-clock fuzzing.
pub const TICKS_PER_MINUTE: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Quiet window with no new function before leaving inter-function exploration.
    pub w_function: u64,
    /// Quiet window with no newly reached target before leaving intra-function exploration.
    pub w_reach: u64,
    /// Quiet window with no newly triggered target before leaving exploitation.
    pub w_trigger: u64,
    /// Share of reached targets (least-hit first) serviced by an exploitation pass.
    pub exploit_fraction: f64,
    /// Keep already-triggered targets among exploitation candidates.
    pub exploit_include_triggered: bool,
    /// Phase entered when exploitation times out.
    pub exploit_timeout_to: Phase,
    /// Probability that selection is restricted to favored seeds when any exist.
    pub favored_bias: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            w_function: 30 * TICKS_PER_MINUTE,
            w_reach: 10 * TICKS_PER_MINUTE,
            w_trigger: 60 * TICKS_PER_MINUTE,
            exploit_fraction: 0.20,
            exploit_include_triggered: false,
            exploit_timeout_to: Phase::InterExplore,
            favored_bias: 1.0,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_function == 0 || self.w_reach == 0 || self.w_trigger == 0 {
            return Err(Error::Config("phase windows must be positive".into()));
        }
        if !(self.exploit_fraction > 0.0 && self.exploit_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "exploit_fraction must be in (0, 1], got {}",
                self.exploit_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.favored_bias) {
            return Err(Error::Config(format!(
                "favored_bias must be in [0, 1], got {}",
                self.favored_bias
            )));
        }
        if self.exploit_timeout_to == Phase::Exploit {
            return Err(Error::Config("exploit_timeout_to cannot be EXPLOIT".into()));
        }
        Ok(())
    }

    /// Number of least-hit candidates an exploitation pass services:
    /// `ceil(n * exploit_fraction)`, so a single candidate is never starved.
    pub fn exploit_threshold(&self, n_candidates: usize) -> usize {
        let raw = n_candidates as f64 * self.exploit_fraction;
        // Absorb representation error in products like 10 * 0.2.
        ((raw - 1e-9).ceil().max(0.0) as usize).min(n_candidates)
    }
}

/// Which functions some execution has traversed, and which contain targets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionExplorationState {
    explored: Vec<bool>,
    has_targets: Vec<bool>,
}

impl FunctionExplorationState {
    pub fn new(graph: &ProgramGraph) -> Self {
        FunctionExplorationState {
            explored: vec![false; graph.n_functions()],
            has_targets: graph.functions().iter().map(|f| f.has_targets()).collect(),
        }
    }

    /// Mark the trace's functions explored; returns how many were new.
    pub fn record(&mut self, trace: &ExecutionTrace) -> usize {
        let mut fresh = 0;
        for f in &trace.functions {
            if let Some(slot) = self.explored.get_mut(f.index()) {
                if !*slot {
                    *slot = true;
                    fresh += 1;
                }
            }
        }
        fresh
    }

    pub fn is_explored(&self, f: FunctionId) -> bool {
        self.explored.get(f.index()).copied().unwrap_or(false)
    }

    pub fn has_targets(&self, f: FunctionId) -> bool {
        self.has_targets.get(f.index()).copied().unwrap_or(false)
    }

    pub fn explored_count(&self) -> usize {
        self.explored.iter().filter(|&&e| e).count()
    }

    /// Functions that contain targets but were never traversed, ascending.
    pub fn unexplored_target_functions(&self) -> impl Iterator<Item = FunctionId> + '_ {
        self.explored
            .iter()
            .zip(&self.has_targets)
            .enumerate()
            .filter(|(_, (&e, &t))| !e && t)
            .map(|(i, _)| FunctionId(i as u32))
    }
}
