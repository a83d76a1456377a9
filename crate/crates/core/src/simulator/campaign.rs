//! Deterministic campaign loop.
//!
//! One tick selects a parent, runs `executions_per_tick` mutated children,
//! records them, and steps the phase machine. A child joins the queue when it
//! covers a new CFG edge or reaches a new target. Everything is driven by one
//! seeded ChaCha stream, so `(graph, config)` fully determines the result.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::execution::{dsf_all, ExecutionTrace, Seed};
use crate::graph::ProgramGraph;
use crate::ids::{Distance, SeedId, TargetId};
use crate::ranking::{TargetRanking, UpdateSummary};
use crate::scheduler::{
    classify_event, exploitation_cull_with, inter_function_cull_with, intra_function_cull, phase_step,
    select_next_seed, FunctionExplorationState, Phase, PhaseClock, PhaseEvent, SchedulerConfig,
};
use crate::simulator::mutation::{child_size, exec_time, execute_mutation, MutationModel, SimWorld};
use crate::static_distance::{build_distance_map, harmonic_distance, StaticDistanceMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    #[serde(rename = "fishfuzz")]
    FishFuzz,
    RoundRobin,
    AflFavor,
    HarmonicDirected,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] = [
        SchedulerKind::FishFuzz,
        SchedulerKind::RoundRobin,
        SchedulerKind::AflFavor,
        SchedulerKind::HarmonicDirected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::FishFuzz => "fishfuzz",
            SchedulerKind::RoundRobin => "round_robin",
            SchedulerKind::AflFavor => "afl_favor",
            SchedulerKind::HarmonicDirected => "harmonic_directed",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scheduler `{s}` (expected fishfuzz, round_robin, afl_favor or harmonic_directed)"
                ))
            })
    }
}

/// Campaign length, in ticks, of the standard scheduler comparisons.
pub const STANDARD_DURATION: u64 = 50_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub scheduler: SchedulerKind,
    /// Virtual ticks.
    pub duration: u64,
    pub executions_per_tick: u32,
    pub rng_seed: u64,
    pub sched: SchedulerConfig,
    pub model: MutationModel,
    /// Ticks between growth-series samples.
    pub sample_every: u64,
    /// Ticks between forced re-culls; structural changes re-cull immediately.
    pub recull_every: u64,
}

impl CampaignConfig {
    pub fn new(scheduler: SchedulerKind, duration: u64, rng_seed: u64) -> Self {
        CampaignConfig {
            scheduler,
            duration,
            executions_per_tick: 1,
            rng_seed,
            sched: SchedulerConfig::default(),
            model: MutationModel::default(),
            sample_every: 100,
            recull_every: 50,
        }
    }

    /// Defaults at [`STANDARD_DURATION`].
    pub fn standard(scheduler: SchedulerKind, rng_seed: u64) -> Self {
        CampaignConfig::new(scheduler, STANDARD_DURATION, rng_seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.sched.validate()?;
        self.model.validate()?;
        if self.executions_per_tick == 0 || self.sample_every == 0 || self.recull_every == 0 {
            return Err(Error::Config(
                "executions_per_tick, sample_every and recull_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time: u64,
    pub coverage: usize,
    pub functions: usize,
    pub reached: usize,
    pub triggered: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub time: u64,
    pub phase: Phase,
    pub event: PhaseEvent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub hits: u64,
    pub reached: bool,
    pub triggered: bool,
    /// Reachable from the entry over direct and indirect calls.
    pub reachable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub size: usize,
    pub favored: usize,
    pub executions: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub scheduler: SchedulerKind,
    pub rng_seed: u64,
    pub graph_hash: String,
    pub duration: u64,
    pub series: Vec<SeriesPoint>,
    /// State at the end of the run, including the initial seed.
    pub totals: SeriesPoint,
    pub targets: Vec<TargetRecord>,
    pub timeline: Vec<TimelineEntry>,
    pub queue: QueueStats,
}

impl CampaignResult {
    pub fn reached(&self) -> usize {
        self.targets.iter().filter(|t| t.reached).count()
    }

    pub fn triggered(&self) -> usize {
        self.targets.iter().filter(|t| t.triggered).count()
    }

    pub fn coverage(&self) -> usize {
        self.totals.coverage
    }

    /// Targets reachable in the program that no execution ever hit.
    pub fn never_hit(&self) -> usize {
        self.targets.iter().filter(|t| t.reachable && t.hits == 0).count()
    }

    /// Hit counts of reachable targets, in target order.
    pub fn reachable_hits(&self) -> Vec<u64> {
        self.targets.iter().filter(|t| t.reachable).map(|t| t.hits).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from_json)
    }
}

/// A campaign in progress. Exposed so tests can inspect the queue mid-run.
pub struct Campaign<'a> {
    graph: &'a ProgramGraph,
    map: Option<&'a StaticDistanceMap>,
    world: &'a SimWorld,
    cfg: CampaignConfig,
    rng: ChaCha8Rng,
    queue: Vec<Seed>,
    /// Per queued seed: `dsf` to every function (fishfuzz only).
    dsf_rows: Vec<Vec<Distance>>,
    /// Per queued seed: harmonic distance to all targets (harmonic_directed only).
    harmonic: Vec<f64>,
    all_targets: Vec<TargetId>,
    ranking: TargetRanking,
    fstate: FunctionExplorationState,
    covered: Vec<bool>,
    coverage: usize,
    phase: Phase,
    clock: PhaseClock,
    timeline: Vec<TimelineEntry>,
    series: Vec<SeriesPoint>,
    now: u64,
    executions: u64,
    next_id: u64,
    rr_cursor: usize,
    dirty: bool,
    last_cull: u64,
}

impl<'a> Campaign<'a> {
    /// `map` is required by the fishfuzz scheduler and ignored otherwise.
    pub fn new(
        graph: &'a ProgramGraph,
        map: Option<&'a StaticDistanceMap>,
        world: &'a SimWorld,
        cfg: CampaignConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if graph.n_functions() == 0 {
            return Err(Error::Config("cannot fuzz an empty program".into()));
        }
        if cfg.scheduler == SchedulerKind::FishFuzz {
            match map {
                None => return Err(Error::Config("fishfuzz needs a distance map".into())),
                Some(m) if m.built_from() != graph.content_hash_hex() => {
                    return Err(Error::HashMismatch {
                        expected: m.built_from().to_string(),
                        actual: graph.content_hash_hex(),
                    })
                }
                Some(_) => {}
            }
        }
        let mut c = Campaign {
            graph,
            map,
            world,
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            cfg,
            queue: Vec::new(),
            dsf_rows: Vec::new(),
            harmonic: Vec::new(),
            all_targets: graph.targets().iter().map(|t| t.id).collect(),
            ranking: TargetRanking::new(graph),
            fstate: FunctionExplorationState::new(graph),
            covered: vec![false; graph.n_edges()],
            coverage: 0,
            phase: Phase::InterExplore,
            clock: PhaseClock::starting_at(0),
            timeline: Vec::new(),
            series: Vec::new(),
            now: 0,
            executions: 0,
            next_id: 0,
            rr_cursor: 0,
            dirty: true,
            last_cull: 0,
        };
        // The initial input: one execution from nothing.
        let trace = execute_mutation(&ExecutionTrace::default(), &c.cfg.model, graph, world, &mut c.rng);
        let summary = c.record(&trace, None, 64)?;
        c.timeline.push(TimelineEntry {
            time: 0,
            phase: c.phase,
            event: classify_event(c.phase, c.phase, &summary).unwrap_or(PhaseEvent::NewFunction),
        });
        Ok(c)
    }

    pub fn queue(&self) -> &[Seed] {
        &self.queue
    }

    pub fn ranking(&self) -> &TargetRanking {
        &self.ranking
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn is_done(&self) -> bool {
        self.now >= self.cfg.duration
    }

    /// Execute, account, and possibly enqueue one trace.
    fn record(&mut self, trace: &ExecutionTrace, parent: Option<usize>, parent_size: u32) -> Result<UpdateSummary> {
        self.executions += 1;
        let mut summary = self.ranking.record_execution(trace, self.now)?;
        summary.new_functions = self.fstate.record(trace);
        let mut new_edges = 0;
        for &e in &trace.edges {
            if !self.covered[e.index()] {
                self.covered[e.index()] = true;
                new_edges += 1;
            }
        }
        self.coverage += new_edges;
        if new_edges > 0 || summary.newly_reached > 0 || self.queue.is_empty() {
            let mut seed = Seed::new(
                SeedId(self.next_id),
                exec_time(trace, &self.cfg.model, &mut self.rng),
                child_size(parent_size, &mut self.rng),
                trace.clone(),
            );
            self.next_id += 1;
            seed.parent = parent.map(|i| self.queue[i].id);
            seed.created_at = self.now;
            match self.cfg.scheduler {
                SchedulerKind::FishFuzz => {
                    let map = self.map.expect("checked in new");
                    self.dsf_rows.push(dsf_all(trace, map));
                }
                SchedulerKind::HarmonicDirected => {
                    self.harmonic
                        .push(harmonic_distance(trace, &self.all_targets, self.graph)?);
                }
                _ => {}
            }
            self.queue.push(seed);
            self.dirty = true;
        }
        if summary.new_functions > 0 {
            self.dirty = true;
        }
        Ok(summary)
    }

    fn cull(&mut self) -> Result<()> {
        match self.cfg.scheduler {
            SchedulerKind::RoundRobin => {}
            SchedulerKind::AflFavor => {
                intra_function_cull(&mut self.queue);
            }
            SchedulerKind::HarmonicDirected => self.harmonic_cull(),
            SchedulerKind::FishFuzz => match self.phase {
                Phase::InterExplore => {
                    let rows = &self.dsf_rows;
                    let index: std::collections::HashMap<SeedId, usize> =
                        self.queue.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
                    let favored = inter_function_cull_with(&mut self.queue, &self.fstate, |s, f| {
                        rows[index[&s.id]][f.index()]
                    });
                    // Nothing left to steer towards: fall back to edge-cover culling.
                    if favored == 0 {
                        intra_function_cull(&mut self.queue);
                    }
                }
                Phase::IntraExplore => {
                    intra_function_cull(&mut self.queue);
                }
                Phase::Exploit => {
                    let rows = &self.dsf_rows;
                    let graph = self.graph;
                    let ranking = &self.ranking;
                    let index: std::collections::HashMap<SeedId, usize> =
                        self.queue.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
                    exploitation_cull_with(&mut self.queue, ranking, &self.cfg.sched, |s, t| {
                        if ranking.state(t)?.triggered {
                            return Ok(Distance::ZERO);
                        }
                        Ok(rows[index[&s.id]][graph.target(t)?.function.index()])
                    })?;
                }
            },
        }
        self.dirty = false;
        self.last_cull = self.now;
        Ok(())
    }

    /// Favor the closest `ceil(fraction * |queue|)` seeds by harmonic distance.
    fn harmonic_cull(&mut self) {
        let mut order: Vec<usize> = (0..self.queue.len()).collect();
        order.sort_by(|&a, &b| {
            self.harmonic[a]
                .total_cmp(&self.harmonic[b])
                .then(self.queue[a].exec_time.cmp(&self.queue[b].exec_time))
                .then(self.queue[a].id.cmp(&self.queue[b].id))
        });
        let keep = self.cfg.sched.exploit_threshold(self.queue.len()).max(1);
        for s in &mut self.queue {
            s.favor = false;
        }
        for &i in order.iter().take(keep) {
            if self.harmonic[i].is_finite() {
                self.queue[i].favor = true;
            }
        }
    }

    /// Advance one tick.
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Ok(());
        }
        self.now += 1;
        if self.dirty || self.now - self.last_cull >= self.cfg.recull_every {
            self.cull()?;
        }
        let parent = match self.cfg.scheduler {
            SchedulerKind::RoundRobin => {
                let i = self.rr_cursor % self.queue.len();
                self.rr_cursor = self.rr_cursor.wrapping_add(1);
                i
            }
            _ => select_next_seed(&self.queue, &mut self.rng, self.cfg.sched.favored_bias)?,
        };
        let mut total = UpdateSummary::default();
        for _ in 0..self.cfg.executions_per_tick {
            let child = execute_mutation(
                &self.queue[parent].trace,
                &self.cfg.model,
                self.graph,
                self.world,
                &mut self.rng,
            );
            let size = self.queue[parent].size;
            let s = self.record(&child, Some(parent), size)?;
            total.new_functions += s.new_functions;
            total.newly_reached += s.newly_reached;
            total.newly_triggered += s.newly_triggered;
        }

        let before = self.phase;
        self.phase = phase_step(before, &mut self.clock, self.now, &self.cfg.sched, &total);
        if self.phase != before {
            self.dirty = true;
        }
        if let Some(event) = classify_event(before, self.phase, &total) {
            self.timeline.push(TimelineEntry {
                time: self.now,
                phase: self.phase,
                event,
            });
        }
        if self.now.is_multiple_of(self.cfg.sample_every) || self.now == self.cfg.duration {
            self.series.push(SeriesPoint {
                time: self.now,
                coverage: self.coverage,
                functions: self.fstate.explored_count(),
                reached: self.ranking.reached_count(),
                triggered: self.ranking.triggered_count(),
            });
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(self) -> CampaignResult {
        let reachable = self
            .graph
            .entry_function()
            .map(|e| self.graph.ground_truth_reachable(e))
            .unwrap_or_default();
        let targets = self
            .graph
            .targets()
            .iter()
            .map(|t| {
                let s = self.ranking.state(t.id).expect("ranking covers graph targets");
                TargetRecord {
                    hits: s.hits,
                    reached: s.reached,
                    triggered: s.triggered,
                    reachable: reachable[t.function.index()],
                }
            })
            .collect();
        CampaignResult {
            scheduler: self.cfg.scheduler,
            rng_seed: self.cfg.rng_seed,
            graph_hash: self.graph.content_hash_hex(),
            duration: self.cfg.duration,
            series: self.series,
            totals: SeriesPoint {
                time: self.now,
                coverage: self.coverage,
                functions: self.fstate.explored_count(),
                reached: self.ranking.reached_count(),
                triggered: self.ranking.triggered_count(),
            },
            targets,
            timeline: self.timeline,
            queue: QueueStats {
                size: self.queue.len(),
                favored: self.queue.iter().filter(|s| s.favor).count(),
                executions: self.executions,
            },
        }
    }
}

/// Run a whole campaign with a freshly built map and world.
pub fn run_campaign(graph: &ProgramGraph, config: &CampaignConfig) -> Result<CampaignResult> {
    let world = SimWorld::new(graph);
    let map = (config.scheduler == SchedulerKind::FishFuzz).then(|| build_distance_map(graph));
    run_campaign_with(graph, map.as_ref(), &world, config)
}

/// Run a campaign reusing a prebuilt map and world.
pub fn run_campaign_with(
    graph: &ProgramGraph,
    map: Option<&StaticDistanceMap>,
    world: &SimWorld,
    config: &CampaignConfig,
) -> Result<CampaignResult> {
    let mut c = Campaign::new(graph, map, world, config.clone())?;
    c.run_to_end()?;
    Ok(c.finish())
}
