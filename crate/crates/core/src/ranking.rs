//! Dynamic per-target state shared by culling and distance computation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::execution::ExecutionTrace;
use crate::graph::ProgramGraph;
use crate::ids::TargetId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetState {
    pub reached: bool,
    pub triggered: bool,
    /// Executions whose trace reached the target.
    pub hits: u64,
    pub first_reached_at: Option<u64>,
    pub first_triggered_at: Option<u64>,
}

/// Outcome of recording one execution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateSummary {
    /// Filled in by the function-exploration tracker, not by the ranking.
    pub new_functions: usize,
    pub newly_reached: usize,
    pub newly_triggered: usize,
}

impl UpdateSummary {
    pub fn is_empty(&self) -> bool {
        self.new_functions == 0 && self.newly_reached == 0 && self.newly_triggered == 0
    }
}

/// Whether [`TargetRanking::reached_untriggered`] keeps triggered targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriggeredFilter {
    Include,
    Exclude,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRanking {
    states: Vec<TargetState>,
    epoch: u64,
}

impl TargetRanking {
    pub fn new(graph: &ProgramGraph) -> Self {
        Self::with_targets(graph.targets().len())
    }

    pub fn with_targets(n: usize) -> Self {
        TargetRanking {
            states: vec![TargetState::default(); n],
            epoch: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Incremented once per recorded execution that changed any state.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn state(&self, t: TargetId) -> Result<&TargetState> {
        self.states.get(t.index()).ok_or(Error::UnknownTarget(t))
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = (TargetId, &TargetState)> {
        self.states
            .iter()
            .enumerate()
            .map(|(i, s)| (TargetId(i as u32), s))
    }

    pub fn reached_count(&self) -> usize {
        self.states.iter().filter(|s| s.reached).count()
    }

    pub fn triggered_count(&self) -> usize {
        self.states.iter().filter(|s| s.triggered).count()
    }

    /// Apply one execution. The trace is checked in full before any state
    /// changes, so an error leaves the ranking untouched.
    pub fn record_execution(&mut self, trace: &ExecutionTrace, now: u64) -> Result<UpdateSummary> {
        for &t in trace.targets_reached.iter().chain(&trace.targets_triggered) {
            if t.index() >= self.states.len() {
                return Err(Error::UnknownTarget(t));
            }
        }
        if let Some(t) = trace
            .targets_triggered
            .iter()
            .find(|t| !trace.targets_reached.contains(t))
        {
            return Err(Error::Validation(format!(
                "target {t} is triggered but not reached"
            )));
        }

        let mut summary = UpdateSummary::default();
        for &t in &trace.targets_reached {
            let s = &mut self.states[t.index()];
            s.hits += 1;
            if !s.reached {
                s.reached = true;
                s.first_reached_at = Some(now);
                summary.newly_reached += 1;
            }
        }
        for &t in &trace.targets_triggered {
            let s = &mut self.states[t.index()];
            if !s.triggered {
                s.triggered = true;
                s.first_triggered_at = Some(now);
                summary.newly_triggered += 1;
            }
        }
        if !trace.targets_reached.is_empty() {
            self.epoch += 1;
        }
        Ok(summary)
    }

    /// Reached targets in id order. `Include` is the literal exploitation
    /// filter; `Exclude` drops targets that already triggered.
    pub fn reached_untriggered(&self, filter: TriggeredFilter) -> Vec<TargetId> {
        self.states()
            .filter(|(_, s)| s.reached && (filter == TriggeredFilter::Include || !s.triggered))
            .map(|(t, _)| t)
            .collect()
    }

    /// Least-hit first; equal hits by ascending id.
    pub fn order_by_hits(&self, ids: &[TargetId]) -> Result<Vec<TargetId>> {
        let mut keyed = ids
            .iter()
            .map(|&t| Ok((self.state(t)?.hits, t)))
            .collect::<Result<Vec<_>>>()?;
        keyed.sort_unstable();
        Ok(keyed.into_iter().map(|(_, t)| t).collect())
    }

    /// Hit counts sorted descending, for rank/frequency plots.
    pub fn frequency_series(&self) -> Vec<u64> {
        let mut hits: Vec<u64> = self.states.iter().map(|s| s.hits).collect();
        hits.sort_unstable_by(|a, b| b.cmp(a));
        hits
    }

    pub fn energy_csv(&self) -> String {
        fn opt(v: Option<u64>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        let mut out = String::from("target_id,hits,reached,triggered,first_reached_at,first_triggered_at\n");
        for (t, s) in self.states() {
            let _ = writeln!(
                out,
                "{t},{},{},{},{},{}",
                s.hits,
                s.reached,
                s.triggered,
                opt(s.first_reached_at),
                opt(s.first_triggered_at)
            );
        }
        out
    }
}
