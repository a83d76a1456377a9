//! Stochastic execution model.
//!
//! A child execution keeps each of its parent's functions with probability
//! `locality` (as long as it stays connected to the entry), then crosses each
//! untaken outgoing call with probability `frontier_advance^(1 + w)`, where `w`
//! is the call's conditional-edge weight. Crossing is repeated from newly
//! entered functions, so reaching a function `k` calls away with total weight
//! `W` has probability `frontier_advance^(k + W)`: seeds statically closer to a
//! function are likelier to reach it. Calls are taken over the ground-truth
//! graph, indirect edges included.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::execution::ExecutionTrace;
use crate::graph::ProgramGraph;
use crate::ids::{BlockId, Distance, FunctionId, TargetId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationModel {
    /// Chance a child keeps each parent function, and follows the parent's
    /// branch at each block the parent also covered.
    pub locality: f64,
    /// Base chance of crossing one additional outgoing call.
    pub frontier_advance: f64,
    /// Chance per execution that a reached target fires, before hardness.
    pub trigger_probability: f64,
    pub base_exec_time: u64,
    pub per_function_cost: u64,
    /// Multiplicative exec-time noise, uniform in `[1 - n, 1 + n]`.
    pub exec_noise: f64,
}

impl Default for MutationModel {
    fn default() -> Self {
        MutationModel {
            locality: 0.8,
            frontier_advance: 0.35,
            trigger_probability: 0.02,
            base_exec_time: 100,
            per_function_cost: 20,
            exec_noise: 0.2,
        }
    }
}

impl MutationModel {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("locality", self.locality),
            ("frontier_advance", self.frontier_advance),
            ("trigger_probability", self.trigger_probability),
            ("exec_noise", self.exec_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    /// Probability of crossing a call edge of the given weight.
    pub fn crossing_probability(&self, weight: u64) -> f64 {
        self.frontier_advance.powi((weight.min(i32::MAX as u64 - 1) + 1) as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroundCall {
    pub callee: FunctionId,
    pub site: BlockId,
    pub weight: u64,
    pub indirect: bool,
}

/// Precomputed ground-truth view of a program used by the execution model.
#[derive(Clone, Debug)]
pub struct SimWorld {
    /// Outgoing calls per function, sorted by `(callee, site)`, at most one
    /// per callee (the cheapest site).
    calls: Vec<Vec<GroundCall>>,
    /// Predecessor on a fewest-conditional-edges path from the entry, per block.
    entry_pred: Vec<Option<BlockId>>,
    /// Targets located in each block.
    block_targets: BTreeMap<BlockId, Vec<TargetId>>,
    /// Per-target multiplier on the trigger probability, in `[0.1, 1]`.
    hardness: Vec<f64>,
    entry: FunctionId,
}

impl SimWorld {
    pub fn new(graph: &ProgramGraph) -> Self {
        let mut calls: Vec<Vec<GroundCall>> = vec![Vec::new(); graph.n_functions()];
        let mut entry_pred = vec![None; graph.blocks().len()];
        let mut entry_dist = vec![Distance::Infinite; graph.blocks().len()];
        for f in graph.functions() {
            let (dist, pred) = graph.dbb_tree(f, f.entry);
            for b in f.block_ids() {
                entry_pred[b.index()] = pred[f.local(b)];
                entry_dist[b.index()] = dist[f.local(b)];
            }
        }
        let mut push = |caller: FunctionId, site: BlockId, callee: FunctionId, indirect: bool| {
            let Some(weight) = entry_dist[site.index()].finite() else {
                return;
            };
            let out = &mut calls[caller.index()];
            let call = GroundCall {
                callee,
                site,
                weight,
                indirect,
            };
            match out.iter_mut().find(|c| c.callee == callee) {
                Some(existing) if (weight, site) < (existing.weight, existing.site) => *existing = call,
                Some(_) => {}
                None => out.push(call),
            }
        };
        for b in graph.blocks() {
            for &callee in &b.callees {
                push(b.owner, b.id, callee, false);
            }
        }
        for e in graph.ground_truth() {
            push(e.from_fn, e.from_block, e.to_fn, true);
        }
        for out in &mut calls {
            out.sort();
        }

        let mut block_targets: BTreeMap<BlockId, Vec<TargetId>> = BTreeMap::new();
        for t in graph.targets() {
            block_targets.entry(t.block).or_default().push(t.id);
        }

        let mut seed = [0u8; 32];
        seed.copy_from_slice(&graph.content_hash());
        let mut rng = ChaCha8Rng::from_seed(seed);
        let hardness = graph.targets().iter().map(|_| rng.gen_range(0.1..=1.0)).collect();

        SimWorld {
            calls,
            entry_pred,
            block_targets,
            hardness,
            entry: graph.entry_function().unwrap_or_default(),
        }
    }

    pub fn calls(&self, f: FunctionId) -> &[GroundCall] {
        &self.calls[f.index()]
    }

    pub fn hardness(&self, t: TargetId) -> f64 {
        self.hardness[t.index()]
    }

    pub fn entry(&self) -> FunctionId {
        self.entry
    }
}

/// Run one mutated child of `parent` through the model.
pub fn execute_mutation<R: Rng + ?Sized>(
    parent: &ExecutionTrace,
    model: &MutationModel,
    graph: &ProgramGraph,
    world: &SimWorld,
    rng: &mut R,
) -> ExecutionTrace {
    let entry = world.entry;
    let mut functions: BTreeSet<FunctionId> = BTreeSet::new();
    // Call sites that must be executed, per caller.
    let mut sites: BTreeMap<FunctionId, BTreeSet<BlockId>> = BTreeMap::new();
    let mut order: Vec<FunctionId> = Vec::new();
    functions.insert(entry);
    order.push(entry);

    // Keep parent functions reachable through kept functions.
    let mut decided: BTreeSet<FunctionId> = BTreeSet::new();
    let mut queue = VecDeque::from([entry]);
    while let Some(f) = queue.pop_front() {
        for c in world.calls(f) {
            if !parent.functions.contains(&c.callee) || functions.contains(&c.callee) || !decided.insert(c.callee) {
                continue;
            }
            if model.locality >= 1.0 || rng.gen_bool(model.locality) {
                functions.insert(c.callee);
                order.push(c.callee);
                sites.entry(f).or_default().insert(c.site);
                queue.push_back(c.callee);
            }
        }
    }

    // Push past the frontier.
    let mut i = 0;
    while i < order.len() {
        let f = order[i];
        i += 1;
        for c in world.calls(f) {
            if functions.contains(&c.callee) {
                continue;
            }
            let p = model.crossing_probability(c.weight);
            if p > 0.0 && (p >= 1.0 || rng.gen_bool(p)) {
                functions.insert(c.callee);
                order.push(c.callee);
                sites.entry(f).or_default().insert(c.site);
            }
        }
    }

    // Block-level walk inside every traversed function.
    let mut trace = ExecutionTrace::default();
    let parent_succ = parent_successors(parent, graph);
    for &f in &functions {
        let func = &graph.functions()[f.index()];
        let mut visited: BTreeSet<BlockId> = BTreeSet::new();
        let mut b = func.entry;
        visited.insert(b);
        for _ in 0..=2 * func.n_blocks() {
            let bb = graph.block(b);
            if bb.successors.is_empty() {
                break;
            }
            let k = pick_successor(b, bb.successors.len(), &parent_succ, model.locality, rng);
            trace.edges.insert(graph.edge_id(b, k));
            b = bb.successors[k];
            visited.insert(b);
        }
        if let Some(needed) = sites.get(&f) {
            for &site in needed {
                let mut cur = site;
                visited.insert(cur);
                while let Some(p) = world.entry_pred[cur.index()] {
                    let k = graph
                        .block(p)
                        .successors
                        .iter()
                        .position(|&s| s == cur)
                        .expect("predecessor links a successor");
                    trace.edges.insert(graph.edge_id(p, k));
                    if !visited.insert(p) {
                        break;
                    }
                    cur = p;
                }
            }
        }
        for blk in &visited {
            if let Some(ts) = world.block_targets.get(blk) {
                for &t in ts {
                    trace.targets_reached.insert(t);
                }
            }
        }
    }
    for &t in &trace.targets_reached {
        let p = (model.trigger_probability * world.hardness(t)).clamp(0.0, 1.0);
        if p > 0.0 && rng.gen_bool(p) {
            trace.targets_triggered.insert(t);
        }
    }
    trace.functions = functions;
    trace
}

/// Successor indices the parent took out of each block it covered.
fn parent_successors(parent: &ExecutionTrace, graph: &ProgramGraph) -> BTreeMap<BlockId, Vec<usize>> {
    let mut out: BTreeMap<BlockId, Vec<usize>> = BTreeMap::new();
    for &e in &parent.edges {
        if e.index() >= graph.n_edges() {
            continue;
        }
        let (from, to) = graph.edge(e);
        if let Some(k) = graph.block(from).successors.iter().position(|&s| s == to) {
            out.entry(from).or_default().push(k);
        }
    }
    out
}

fn pick_successor<R: Rng + ?Sized>(
    block: BlockId,
    n_succ: usize,
    parent_succ: &BTreeMap<BlockId, Vec<usize>>,
    locality: f64,
    rng: &mut R,
) -> usize {
    if n_succ == 1 {
        return 0;
    }
    if let Some(taken) = parent_succ.get(&block) {
        if locality >= 1.0 || rng.gen_bool(locality) {
            return taken[rng.gen_range(0..taken.len())];
        }
    }
    rng.gen_range(0..n_succ)
}

/// Virtual execution time of a trace.
pub fn exec_time<R: Rng + ?Sized>(trace: &ExecutionTrace, model: &MutationModel, rng: &mut R) -> u64 {
    let cost = model.base_exec_time as f64
        + model.per_function_cost as f64 * trace.functions.len() as f64
        + trace.edges.len() as f64;
    let noise = if model.exec_noise > 0.0 {
        rng.gen_range(1.0 - model.exec_noise..=1.0 + model.exec_noise)
    } else {
        1.0
    };
    ((cost * noise).round() as u64).max(1)
}

/// Child input size: the parent's scaled by a factor in `[1/2, 2]`.
pub fn child_size<R: Rng + ?Sized>(parent_size: u32, rng: &mut R) -> u32 {
    let factor = 2f64.powf(rng.gen_range(-1.0..=1.0));
    ((parent_size as f64 * factor).round() as u32).clamp(1, 1 << 16)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::generate::{generate_program, SyntheticProgramSpec};

    fn chain(n: u32) -> ProgramGraph {
        let functions: Vec<String> = (0..n)
            .map(|i| {
                let calls = if i + 1 < n { format!("[{}]", i + 1) } else { "[]".into() };
                format!(r#"{{"id":{i},"name":"f{i}","entry":{i},"blocks":[{{"id":{i},"calls":{calls}}}],"targets":[{{"id":{i},"block":{i}}}]}}"#)
            })
            .collect();
        ProgramGraph::from_json(&format!(r#"{{"functions":[{}]}}"#, functions.join(","))).unwrap()
    }

    fn walk(
        parent: &ExecutionTrace,
        model: &MutationModel,
        graph: &ProgramGraph,
        seed: u64,
    ) -> ExecutionTrace {
        let world = SimWorld::new(graph);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        execute_mutation(parent, model, graph, &world, &mut rng)
    }

    #[test]
    fn no_advance_full_locality_keeps_parent_functions() {
        let g = chain(5);
        let parent = ExecutionTrace::from_functions([FunctionId(0), FunctionId(1), FunctionId(2)]);
        let model = MutationModel {
            locality: 1.0,
            frontier_advance: 0.0,
            ..MutationModel::default()
        };
        for s in 0..20 {
            assert_eq!(walk(&parent, &model, &g, s).functions, parent.functions);
        }
    }

    #[test]
    fn full_advance_reaches_the_closure() {
        let g = generate_program(&SyntheticProgramSpec {
            n_functions: 30,
            ..SyntheticProgramSpec::standard()
        })
        .unwrap();
        let model = MutationModel {
            locality: 1.0,
            frontier_advance: 1.0,
            ..MutationModel::default()
        };
        let child = walk(&ExecutionTrace::from_functions([FunctionId(0)]), &model, &g, 3);
        assert_eq!(child.functions.len(), 30);
    }

    #[test]
    fn children_stay_inside_ground_truth() {
        let g = generate_program(&SyntheticProgramSpec::standard()).unwrap();
        let world = SimWorld::new(&g);
        let model = MutationModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut parent = ExecutionTrace::default();
        let reachable = g.ground_truth_reachable(FunctionId(0));
        for _ in 0..200 {
            let child = execute_mutation(&parent, &model, &g, &world, &mut rng);
            child.validate(&g).unwrap();
            assert!(child.functions.iter().all(|f| reachable[f.index()]));
            for &e in &child.edges {
                let (from, _) = g.edge(e);
                assert!(child.functions.contains(&g.block(from).owner));
            }
            parent = child;
        }
    }
}
