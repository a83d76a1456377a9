//! Random program builders and independent reference implementations used as
//! oracles by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use fishsched_core::graph::{RawBlock, RawFunction, RawIndirectEdge, RawProgram, RawTarget};
use fishsched_core::{FunctionId, ProgramGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixture path; works from the core crate and from sibling crates that
/// include this module.
pub fn fixture(name: &str) -> PathBuf {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let local = here.join("fixtures");
    let dir = if local.is_dir() { local } else { here.join("../core/fixtures") };
    dir.join(name)
}

pub fn two_seeds() -> ProgramGraph {
    fishsched_core::load_program(fixture("two_seeds.graph")).expect("two_seeds fixture loads")
}

/// A random program with arbitrary intra-function CFGs (back edges and self
/// loops included), random direct calls (recursion included), some targets,
/// and optionally some indirect calls.
pub fn random_program(seed: u64, max_functions: usize, max_blocks: usize, indirect: f64) -> ProgramGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_functions);
    let mut functions = Vec::with_capacity(n);
    let mut next_block = 0u32;
    let mut next_target = 0u32;
    for f in 0..n {
        let k = rng.gen_range(1..=max_blocks);
        let base = next_block;
        next_block += k as u32;
        let mut blocks = Vec::with_capacity(k);
        for i in 0..k {
            let mut succ: BTreeSet<u32> = BTreeSet::new();
            for _ in 0..rng.gen_range(0..=3) {
                succ.insert(base + rng.gen_range(0..k) as u32);
            }
            let mut calls = Vec::new();
            if rng.gen_bool(0.3) {
                calls.push(rng.gen_range(0..n) as u32);
            }
            blocks.push(RawBlock {
                id: base + i as u32,
                succ: succ.into_iter().collect(),
                calls,
            });
        }
        let targets = (0..rng.gen_range(0..=2))
            .map(|_| {
                next_target += 1;
                RawTarget {
                    id: next_target - 1,
                    block: base + rng.gen_range(0..k) as u32,
                }
            })
            .collect();
        functions.push(RawFunction {
            id: f as u32,
            name: format!("f{f}"),
            entry: base + rng.gen_range(0..k) as u32,
            blocks,
            targets,
        });
    }
    let direct: BTreeSet<(u32, u32)> = functions
        .iter()
        .flat_map(|f| f.blocks.iter().flat_map(move |b| b.calls.iter().map(move |&c| (f.id, c))))
        .collect();
    let mut indirect_edges = Vec::new();
    let mut seen = BTreeSet::new();
    if indirect > 0.0 {
        for _ in 0..n {
            if !rng.gen_bool(indirect) {
                continue;
            }
            let from = rng.gen_range(0..n);
            let to = rng.gen_range(0..n) as u32;
            if direct.contains(&(from as u32, to)) || !seen.insert((from, to)) {
                continue;
            }
            let f = &functions[from];
            indirect_edges.push(RawIndirectEdge {
                from_fn: from as u32,
                from_block: f.blocks[rng.gen_range(0..f.blocks.len())].id,
                to_fn: to,
            });
        }
    }
    ProgramGraph::from_raw(&RawProgram {
        functions,
        indirect_edges,
    })
    .expect("random program is valid")
}

/// Fewest conditional edges from `from` to each block of `f`, by
/// Bellman-Ford relaxation over local block indices.
pub fn oracle_dbb(g: &ProgramGraph, f: FunctionId, from_local: usize) -> Vec<Option<u64>> {
    let func = &g.functions()[f.index()];
    let ids: Vec<_> = func.block_ids().collect();
    let k = ids.len();
    let mut dist = vec![None; k];
    dist[from_local] = Some(0u64);
    for _ in 0..k {
        let mut changed = false;
        for (i, &b) in ids.iter().enumerate() {
            let Some(d) = dist[i] else { continue };
            let succ = &g.block(b).successors;
            let w = u64::from(succ.len() >= 2);
            for s in succ {
                let j = ids.iter().position(|x| x == s).unwrap();
                if dist[j].is_none_or(|old| d + w < old) {
                    dist[j] = Some(d + w);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// All-pairs function distances by Floyd-Warshall over call weights derived
/// from [`oracle_dbb`].
pub fn oracle_dff(g: &ProgramGraph) -> Vec<Vec<Option<u64>>> {
    let n = g.n_functions();
    let mut d: Vec<Vec<Option<u64>>> = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for f in g.functions() {
        let dist = oracle_dbb(g, f.id, f.local(f.entry));
        for (i, b) in f.block_ids().enumerate() {
            let Some(w) = dist[i] else { continue };
            for c in &g.block(b).callees {
                let slot = &mut d[f.id.index()][c.index()];
                if slot.is_none_or(|old| w < old) {
                    *slot = Some(w);
                }
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = d[i][k] else { continue };
            for j in 0..n {
                if let Some(kj) = d[k][j] {
                    if d[i][j].is_none_or(|old| ik + kj < old) {
                        d[i][j] = Some(ik + kj);
                    }
                }
            }
        }
    }
    d
}

/// Reachability closure over direct calls only, or direct plus indirect.
pub fn oracle_reachable(g: &ProgramGraph, from: FunctionId, with_indirect: bool) -> Vec<bool> {
    let n = g.n_functions();
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in g.call_edges() {
        adj[a.index()][b.index()] = true;
    }
    if with_indirect {
        for e in g.ground_truth() {
            adj[e.from_fn.index()][e.to_fn.index()] = true;
        }
    }
    let mut seen = vec![false; n];
    seen[from.index()] = true;
    loop {
        let mut changed = false;
        for a in 0..n {
            if !seen[a] {
                continue;
            }
            for b in 0..n {
                if adj[a][b] && !seen[b] {
                    seen[b] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return seen;
        }
    }
}
