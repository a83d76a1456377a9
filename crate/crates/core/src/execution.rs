//! Seeds, execution traces, and the dynamic seed distances built on the
//! static map: seed-to-function (`dsf`) and the per-target distance vector.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ProgramGraph;
use crate::ids::{Distance, EdgeId, FunctionId, SeedId, TargetId};
use crate::ranking::TargetRanking;
use crate::static_distance::StaticDistanceMap;

/// What one execution touched. Only the function *set* matters for distances.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub functions: BTreeSet<FunctionId>,
    pub edges: BTreeSet<EdgeId>,
    pub targets_reached: BTreeSet<TargetId>,
    pub targets_triggered: BTreeSet<TargetId>,
}

impl ExecutionTrace {
    pub fn from_functions(functions: impl IntoIterator<Item = FunctionId>) -> Self {
        Self {
            functions: functions.into_iter().collect(),
            ..Self::default()
        }
    }

    /// Checks `triggered ⊆ reached` and that every reached target's function
    /// was traversed.
    pub fn validate(&self, graph: &ProgramGraph) -> Result<()> {
        if let Some(t) = self
            .targets_triggered
            .iter()
            .find(|t| !self.targets_reached.contains(t))
        {
            return Err(Error::Validation(format!(
                "target {t} is triggered but not reached"
            )));
        }
        for &t in &self.targets_reached {
            let owner = graph.target(t)?.function;
            if !self.functions.contains(&owner) {
                return Err(Error::Validation(format!(
                    "target {t} is reached but its function {owner} is not traversed"
                )));
            }
        }
        if let Some(f) = self.functions.iter().find(|f| f.index() >= graph.n_functions()) {
            return Err(Error::UnknownFunction(*f));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub id: SeedId,
    /// Virtual microseconds.
    pub exec_time: u64,
    pub size: u32,
    pub trace: ExecutionTrace,
    /// Rewritten wholesale by every cull pass.
    pub favor: bool,
    pub parent: Option<SeedId>,
    pub created_at: u64,
}

impl Seed {
    pub fn new(id: SeedId, exec_time: u64, size: u32, trace: ExecutionTrace) -> Self {
        Seed {
            id,
            exec_time: exec_time.max(1),
            size: size.max(1),
            trace,
            favor: false,
            parent: None,
            created_at: 0,
        }
    }
}

/// Traversed functions, with the entry function standing in for an empty trace.
fn effective_functions<'a>(
    trace: &'a ExecutionTrace,
    map: &'a StaticDistanceMap,
) -> impl Iterator<Item = FunctionId> + 'a {
    let fallback = if trace.functions.is_empty() {
        map.entry()
    } else {
        None
    };
    trace.functions.iter().copied().chain(fallback)
}

/// Distance from the functions a seed traversed to `f`: zero if `f` was
/// traversed, else the smallest static distance from any traversed function.
pub fn dsf(trace: &ExecutionTrace, f: FunctionId, map: &StaticDistanceMap) -> Result<Distance> {
    if f.index() >= map.n_functions() {
        return Err(Error::UnknownFunction(f));
    }
    if trace.functions.contains(&f) {
        return Ok(Distance::ZERO);
    }
    let mut best = Distance::Infinite;
    for fs in effective_functions(trace, map) {
        if fs.index() >= map.n_functions() {
            return Err(Error::UnknownFunction(fs));
        }
        best = best.min(map.dff_unchecked(fs, f));
        if best.is_zero() {
            break;
        }
    }
    Ok(best)
}

/// `dsf(trace, f)` for every function `f`, indexed by function.
pub fn dsf_all(trace: &ExecutionTrace, map: &StaticDistanceMap) -> Vec<Distance> {
    let n = map.n_functions();
    let mut out = vec![Distance::Infinite; n];
    for fs in effective_functions(trace, map) {
        if fs.index() >= n {
            continue;
        }
        for (g, slot) in out.iter_mut().enumerate() {
            *slot = (*slot).min(map.dff_unchecked(fs, FunctionId(g as u32)));
        }
    }
    for f in &trace.functions {
        if let Some(slot) = out.get_mut(f.index()) {
            *slot = Distance::ZERO;
        }
    }
    out
}

/// One distance per queried target, in query order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetDistanceVector {
    pub entries: Vec<(TargetId, Distance)>,
}

impl TargetDistanceVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, t: TargetId) -> Option<Distance> {
        self.entries.iter().find(|e| e.0 == t).map(|e| e.1)
    }

    pub fn distances(&self) -> impl Iterator<Item = Distance> + '_ {
        self.entries.iter().map(|e| e.1)
    }
}

/// Per-target distances: zero for targets the ranking marks triggered,
/// otherwise `dsf` to the target's function.
pub fn multi_target_distance(
    trace: &ExecutionTrace,
    targets: &[TargetId],
    ranking: &TargetRanking,
    map: &StaticDistanceMap,
    graph: &ProgramGraph,
) -> Result<TargetDistanceVector> {
    let mut entries = Vec::with_capacity(targets.len());
    for &t in targets {
        let owner = graph.target(t)?.function;
        let d = if ranking.state(t)?.triggered {
            Distance::ZERO
        } else {
            dsf(trace, owner, map)?
        };
        entries.push((t, d));
    }
    Ok(TargetDistanceVector { entries })
}

fn join_ids<T: std::fmt::Display>(ids: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for (i, id) in ids.into_iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{id}");
    }
    s
}

/// `seed_id; exec_time_us; size; functions=..; reached=..; triggered=..`
pub fn format_trace_line(seed: &Seed) -> String {
    format!(
        "{}; {}; {}; functions={}; reached={}; triggered={}",
        seed.id,
        seed.exec_time,
        seed.size,
        join_ids(&seed.trace.functions),
        join_ids(&seed.trace.targets_reached),
        join_ids(&seed.trace.targets_triggered),
    )
}

pub fn format_trace_dump<'a>(seeds: impl IntoIterator<Item = &'a Seed>) -> String {
    let mut out = String::new();
    for s in seeds {
        out.push_str(&format_trace_line(s));
        out.push('\n');
    }
    out
}

/// Parses a seed id, accepting an optional `s` prefix (`s1` == `1`).
pub fn parse_seed_id(text: &str) -> Option<SeedId> {
    let t = text.trim();
    t.strip_prefix('s').unwrap_or(t).parse().ok().map(SeedId)
}

fn parse_list<T: From<u32> + Ord>(field: &str, key: &str, line: usize) -> Result<BTreeSet<T>> {
    let bad = |message: String| Error::Parse {
        line,
        column: 0,
        message,
    };
    let value = field
        .trim()
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| bad(format!("expected `{key}=`")))?;
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u32>()
                .map(T::from)
                .map_err(|_| bad(format!("bad id `{s}` in {key}")))
        })
        .collect()
}

/// Parses one trace-dump line; `line` is used only for diagnostics.
pub fn parse_trace_line(text: &str, line: usize) -> Result<Seed> {
    let fields: Vec<&str> = text.split(';').collect();
    let bad = |message: String| Error::Parse {
        line,
        column: 0,
        message,
    };
    if fields.len() != 6 {
        return Err(bad(format!("expected 6 `;`-separated fields, found {}", fields.len())));
    }
    let id = parse_seed_id(fields[0]).ok_or_else(|| bad(format!("bad seed id `{}`", fields[0].trim())))?;
    let exec_time: u64 = fields[1]
        .trim()
        .parse()
        .map_err(|_| bad(format!("bad exec time `{}`", fields[1].trim())))?;
    let size: u32 = fields[2]
        .trim()
        .parse()
        .map_err(|_| bad(format!("bad size `{}`", fields[2].trim())))?;
    if exec_time == 0 || size == 0 {
        return Err(bad("exec time and size must be positive".into()));
    }
    let trace = ExecutionTrace {
        functions: parse_list(fields[3], "functions", line)?,
        edges: BTreeSet::new(),
        targets_reached: parse_list(fields[4], "reached", line)?,
        targets_triggered: parse_list(fields[5], "triggered", line)?,
    };
    Ok(Seed::new(id, exec_time, size, trace))
}

/// Parses a trace dump, skipping blank lines and `#` comments.
pub fn parse_trace_dump(text: &str) -> Result<Vec<Seed>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| parse_trace_line(l, i + 1))
        .collect()
}
