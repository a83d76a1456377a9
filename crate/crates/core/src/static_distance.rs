//! Compile-time function distances.
//!
//! `weight(caller, callee)` is the fewest conditional edges between the
//! caller's entry block and any block that calls `callee`. `dff(a, b)` sums
//! weights along the cheapest direct-call path from `a` to `b`. Both are exact
//! integers; indirect calls are invisible here.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::execution::ExecutionTrace;
use crate::graph::ProgramGraph;
use crate::ids::{Distance, FunctionId, TargetId};

/// Above this many functions the map stores only the columns that lead into
/// target-containing functions instead of a full matrix.
pub const DENSE_LIMIT: usize = 10_000;

/// Stand-in for a zero per-target distance in the harmonic baseline.
pub const HARMONIC_ZERO_EPSILON: f64 = 0.5;

const INF: u32 = u32::MAX;

#[inline]
fn decode(d: u32) -> Distance {
    if d == INF {
        Distance::Infinite
    } else {
        Distance::Finite(u64::from(d))
    }
}

/// Weight of a single call pair: fewest conditional edges from the caller's
/// entry to a block that calls `callee`.
pub fn weight(graph: &ProgramGraph, caller: FunctionId, callee: FunctionId) -> Result<Distance> {
    let f = graph.function(caller)?;
    graph.function(callee)?;
    let sites: Vec<_> = f
        .block_ids()
        .filter(|&b| graph.block(b).callees.contains(&callee))
        .collect();
    if sites.is_empty() {
        return Ok(Distance::Infinite);
    }
    let dist = graph.dbb_from(caller, f.entry)?;
    Ok(sites
        .into_iter()
        .map(|b| dist[f.local(b)])
        .min()
        .unwrap_or(Distance::Infinite))
}

/// Weights of every direct call edge, computed with one BFS per caller.
pub fn all_weights(graph: &ProgramGraph) -> BTreeMap<(FunctionId, FunctionId), Distance> {
    let mut out = BTreeMap::new();
    for f in graph.functions() {
        if !f.block_ids().any(|b| !graph.block(b).callees.is_empty()) {
            continue;
        }
        let (dist, _) = graph.dbb_tree(f, f.entry);
        for b in f.block_ids() {
            let d = dist[f.local(b)];
            for &callee in &graph.block(b).callees {
                out.entry((f.id, callee))
                    .and_modify(|w: &mut Distance| *w = (*w).min(d))
                    .or_insert(d);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum DffStore {
    /// Row-major `n * n`.
    Dense(Vec<u32>),
    /// `dff(*, to)` for selected destination functions.
    Columns(BTreeMap<FunctionId, Vec<u32>>),
}

/// Immutable table of weights and function-to-function distances.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StaticDistanceMap {
    n: usize,
    entry: Option<FunctionId>,
    weights: BTreeMap<(FunctionId, FunctionId), Distance>,
    /// Finite-weight adjacency, sorted by callee.
    adj: Vec<Vec<(FunctionId, u32)>>,
    dff: DffStore,
    built_from: String,
}

fn adjacency(n: usize, weights: &BTreeMap<(FunctionId, FunctionId), Distance>) -> Vec<Vec<(FunctionId, u32)>> {
    let mut adj = vec![Vec::new(); n];
    for (&(a, b), w) in weights {
        if let Some(w) = w.finite() {
            adj[a.index()].push((b, w as u32));
        }
    }
    adj
}

fn reverse_adjacency(adj: &[Vec<(FunctionId, u32)>]) -> Vec<Vec<(FunctionId, u32)>> {
    let mut rev = vec![Vec::new(); adj.len()];
    for (a, out) in adj.iter().enumerate() {
        for &(b, w) in out {
            rev[b.index()].push((FunctionId(a as u32), w));
        }
    }
    rev
}

/// Single-source Dijkstra; ties pop the smallest function id first.
fn dijkstra(adj: &[Vec<(FunctionId, u32)>], source: FunctionId) -> Vec<u32> {
    let mut dist = vec![INF; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source.index()] = 0;
    heap.push(Reverse((0u32, source)));
    while let Some(Reverse((d, f))) = heap.pop() {
        if d > dist[f.index()] {
            continue;
        }
        for &(g, w) in &adj[f.index()] {
            let nd = d.saturating_add(w);
            if nd < dist[g.index()] {
                dist[g.index()] = nd;
                heap.push(Reverse((nd, g)));
            }
        }
    }
    dist
}

pub fn build_distance_map(graph: &ProgramGraph) -> StaticDistanceMap {
    build_distance_map_with_limit(graph, DENSE_LIMIT)
}

/// As [`build_distance_map`], switching to target columns above `dense_limit`
/// functions.
pub fn build_distance_map_with_limit(graph: &ProgramGraph, dense_limit: usize) -> StaticDistanceMap {
    let n = graph.n_functions();
    let weights = all_weights(graph);
    let adj = adjacency(n, &weights);
    let dff = if n <= dense_limit {
        let rows: Vec<Vec<u32>> = (0..n as u32)
            .into_par_iter()
            .map(|s| dijkstra(&adj, FunctionId(s)))
            .collect();
        DffStore::Dense(rows.concat())
    } else {
        let rev = reverse_adjacency(&adj);
        let dests: Vec<FunctionId> = graph
            .functions()
            .iter()
            .filter(|f| f.has_targets())
            .map(|f| f.id)
            .collect();
        let cols: Vec<Vec<u32>> = dests.par_iter().map(|&t| dijkstra(&rev, t)).collect();
        DffStore::Columns(dests.into_iter().zip(cols).collect())
    };
    StaticDistanceMap {
        n,
        entry: graph.entry_function(),
        weights,
        adj,
        dff,
        built_from: graph.content_hash_hex(),
    }
}

impl StaticDistanceMap {
    pub fn n_functions(&self) -> usize {
        self.n
    }

    pub fn entry(&self) -> Option<FunctionId> {
        self.entry
    }

    pub fn built_from(&self) -> &str {
        &self.built_from
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.dff, DffStore::Dense(_))
    }

    pub fn weights(&self) -> &BTreeMap<(FunctionId, FunctionId), Distance> {
        &self.weights
    }

    /// Stored weight of a direct call edge; `Infinite` for non-edges.
    pub fn weight(&self, caller: FunctionId, callee: FunctionId) -> Distance {
        self.weights
            .get(&(caller, callee))
            .copied()
            .unwrap_or(Distance::Infinite)
    }

    fn check(&self, f: FunctionId) -> Result<()> {
        if f.index() < self.n {
            Ok(())
        } else {
            Err(Error::UnknownFunction(f))
        }
    }

    pub fn dff(&self, from: FunctionId, to: FunctionId) -> Result<Distance> {
        self.check(from)?;
        self.check(to)?;
        Ok(self.dff_unchecked(from, to))
    }

    #[inline]
    pub(crate) fn dff_unchecked(&self, from: FunctionId, to: FunctionId) -> Distance {
        match &self.dff {
            DffStore::Dense(m) => decode(m[from.index() * self.n + to.index()]),
            DffStore::Columns(cols) => match cols.get(&to) {
                Some(col) => decode(col[from.index()]),
                // Not a target column: answer with a fresh single-source run.
                None => decode(dijkstra(&self.adj, from)[to.index()]),
            },
        }
    }

    /// `dff(*, to)` for every source, indexed by function.
    pub fn column(&self, to: FunctionId) -> Result<Vec<Distance>> {
        self.check(to)?;
        Ok((0..self.n as u32)
            .map(|f| self.dff_unchecked(FunctionId(f), to))
            .collect())
    }

    /// Number of ordered pairs with a finite distance among stored entries.
    pub fn finite_pairs(&self) -> usize {
        match &self.dff {
            DffStore::Dense(m) => m.iter().filter(|&&d| d != INF).count(),
            DffStore::Columns(cols) => cols
                .values()
                .map(|c| c.iter().filter(|&&d| d != INF).count())
                .sum(),
        }
    }

    fn to_file(&self) -> MapFile {
        let weights = self
            .weights
            .iter()
            .filter_map(|(&(a, b), w)| w.finite().map(|w| [u64::from(a.0), u64::from(b.0), w]))
            .collect();
        let mut dff = Vec::new();
        match &self.dff {
            DffStore::Dense(m) => {
                for a in 0..self.n {
                    for b in 0..self.n {
                        let d = m[a * self.n + b];
                        if d != INF {
                            dff.push([a as u64, b as u64, u64::from(d)]);
                        }
                    }
                }
            }
            DffStore::Columns(cols) => {
                for (to, col) in cols {
                    for (a, &d) in col.iter().enumerate() {
                        if d != INF {
                            dff.push([a as u64, u64::from(to.0), u64::from(d)]);
                        }
                    }
                }
                dff.sort_unstable();
            }
        }
        MapFile {
            built_from: self.built_from.clone(),
            weights,
            dff,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("map serializes")
    }

    /// Parse a saved map and check it against `graph`.
    pub fn from_json(text: &str, graph: &ProgramGraph) -> Result<Self> {
        let file: MapFile = serde_json::from_str(text).map_err(|e| {
            Error::CorruptMap(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        let actual = graph.content_hash_hex();
        if file.built_from != actual {
            return Err(Error::HashMismatch {
                expected: file.built_from,
                actual,
            });
        }
        let n = graph.n_functions();
        let id = |v: u64| -> Result<FunctionId> {
            if (v as usize) < n {
                Ok(FunctionId(v as u32))
            } else {
                Err(Error::CorruptMap(format!("function id {v} out of range")))
            }
        };

        let mut weights: BTreeMap<(FunctionId, FunctionId), Distance> = graph
            .call_edges()
            .iter()
            .map(|&e| (e, Distance::Infinite))
            .collect();
        for [a, b, w] in file.weights {
            let key = (id(a)?, id(b)?);
            match weights.get_mut(&key) {
                Some(slot) => *slot = Distance::Finite(w),
                None => {
                    return Err(Error::CorruptMap(format!(
                        "weight for non-call pair ({a}, {b})"
                    )))
                }
            }
        }
        let adj = adjacency(n, &weights);

        let dense = n <= DENSE_LIMIT;
        let mut matrix = if dense { vec![INF; n * n] } else { Vec::new() };
        let mut cols: BTreeMap<FunctionId, Vec<u32>> = BTreeMap::new();
        for [a, b, d] in file.dff {
            let (a, b) = (id(a)?, id(b)?);
            let d = u32::try_from(d)
                .ok()
                .filter(|&d| d != INF)
                .ok_or_else(|| Error::CorruptMap(format!("distance {d} out of range")))?;
            if dense {
                matrix[a.index() * n + b.index()] = d;
            } else {
                cols.entry(b).or_insert_with(|| vec![INF; n])[a.index()] = d;
            }
        }
        let dff = if dense {
            for f in 0..n {
                if matrix[f * n + f] != 0 {
                    return Err(Error::CorruptMap(format!("dff({f}, {f}) is not 0")));
                }
            }
            DffStore::Dense(matrix)
        } else {
            DffStore::Columns(cols)
        };
        Ok(StaticDistanceMap {
            n,
            entry: graph.entry_function(),
            weights,
            adj,
            dff,
            built_from: actual,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    built_from: String,
    weights: Vec<[u64; 3]>,
    dff: Vec<[u64; 3]>,
}

pub fn save_distance_map(map: &StaticDistanceMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, map.to_json() + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_distance_map(path: impl AsRef<Path>, graph: &ProgramGraph) -> Result<StaticDistanceMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    StaticDistanceMap::from_json(&text, graph)
}

/// Hop count over direct call edges (every edge weighs one) from any function
/// in `sources` to every function.
pub fn hop_distances(graph: &ProgramGraph, sources: impl IntoIterator<Item = FunctionId>) -> Vec<Distance> {
    let n = graph.n_functions();
    let mut adj: Vec<Vec<FunctionId>> = vec![Vec::new(); n];
    for &(a, b) in graph.call_edges() {
        adj[a.index()].push(b);
    }
    let mut dist = vec![Distance::Infinite; n];
    let mut queue = VecDeque::new();
    for s in sources {
        if s.index() < n && dist[s.index()] == Distance::Infinite {
            dist[s.index()] = Distance::ZERO;
            queue.push_back(s);
        }
    }
    while let Some(f) = queue.pop_front() {
        let d = dist[f.index()].finite().unwrap_or(0);
        for &g in &adj[f.index()] {
            if dist[g.index()] == Distance::Infinite {
                dist[g.index()] = Distance::Finite(d + 1);
                queue.push_back(g);
            }
        }
    }
    dist
}

/// Harmonic mean of per-target hop distances between a trace and a target set.
///
/// Each target's distance is the fewest direct call edges from any traversed
/// function to the target's function. Zero distances are replaced by
/// `zero_epsilon`; unreachable targets are left out. Returns `INFINITY` when
/// no target is reachable.
pub fn harmonic_distance_with(
    trace: &ExecutionTrace,
    targets: &[TargetId],
    graph: &ProgramGraph,
    zero_epsilon: f64,
) -> Result<f64> {
    let sources = trace
        .functions
        .iter()
        .copied()
        .chain(trace.functions.is_empty().then(|| graph.entry_function()).flatten());
    let hops = hop_distances(graph, sources);
    let mut count = 0usize;
    let mut inv_sum = 0.0;
    for &t in targets {
        let target = graph.target(t)?;
        if let Some(d) = hops[target.function.index()].finite() {
            let d = if d == 0 { zero_epsilon } else { d as f64 };
            count += 1;
            inv_sum += 1.0 / d;
        }
    }
    if count == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(count as f64 / inv_sum)
}

pub fn harmonic_distance(trace: &ExecutionTrace, targets: &[TargetId], graph: &ProgramGraph) -> Result<f64> {
    harmonic_distance_with(trace, targets, graph, HARMONIC_ZERO_EPSILON)
}
