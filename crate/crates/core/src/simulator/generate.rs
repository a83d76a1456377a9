//! Seeded synthetic program generation.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ProgramGraph, RawBlock, RawFunction, RawIndirectEdge, RawProgram, RawTarget};

/// Callers of a spanning-tree edge are drawn from this many preceding functions,
/// which keeps call chains deep enough for distance to matter.
const TREE_WINDOW: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProgramSpec {
    pub n_functions: usize,
    /// Inclusive `[min, max]`.
    pub blocks_per_function: (usize, usize),
    /// Chance that a block gets a second, forward-skipping successor.
    pub branch_probability: f64,
    /// Mean call sites per function (direct and indirect together).
    pub call_density: f64,
    /// Share of call sites that are indirect.
    pub indirect_edge_fraction: f64,
    /// Inclusive `[min, max]`.
    pub targets_per_function: (usize, usize),
    pub rng_seed: u64,
}

impl SyntheticProgramSpec {
    /// The pinned desk-scale benchmark program.
    pub fn standard() -> Self {
        SyntheticProgramSpec {
            n_functions: 200,
            blocks_per_function: (3, 8),
            branch_probability: 0.4,
            call_density: 1.5,
            indirect_edge_fraction: 0.15,
            targets_per_function: (0, 3),
            rng_seed: STANDARD_PROGRAM_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_functions == 0 {
            return bad("n_functions must be at least 1".into());
        }
        let (bmin, bmax) = self.blocks_per_function;
        if bmin == 0 || bmin > bmax {
            return bad(format!("invalid blocks_per_function range ({bmin}, {bmax})"));
        }
        let (tmin, tmax) = self.targets_per_function;
        if tmin > tmax {
            return bad(format!("invalid targets_per_function range ({tmin}, {tmax})"));
        }
        for (name, p) in [
            ("branch_probability", self.branch_probability),
            ("indirect_edge_fraction", self.indirect_edge_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(self.call_density >= 0.0 && self.call_density.is_finite()) {
            return bad(format!("call_density must be non-negative, got {}", self.call_density));
        }
        if self.total_calls() + 1 < self.n_functions {
            return bad(format!(
                "infeasible spec: {} call sites cannot connect {} functions",
                self.total_calls(),
                self.n_functions
            ));
        }
        Ok(())
    }

    fn total_calls(&self) -> usize {
        (self.call_density * self.n_functions as f64).round() as usize
    }
}

/// Graph seed of [`SyntheticProgramSpec::standard`].
pub const STANDARD_PROGRAM_SEED: u64 = 2022;

/// Campaign rng seeds used for the standard A/B comparisons.
pub const STANDARD_CAMPAIGN_SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

struct Call {
    caller: usize,
    callee: usize,
    indirect: bool,
}

/// Build a program from `spec`. Function 0 is the entry; every function is
/// reachable from it over direct plus indirect calls. When indirect calls are
/// requested and there is room, at least one function is reachable only
/// through an indirect call.
pub fn generate_program(spec: &SyntheticProgramSpec) -> Result<ProgramGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let n = spec.n_functions;

    // Per-function CFG: a forward chain plus optional forward skips.
    let mut next_block = 0u32;
    let mut next_target = 0u32;
    let mut functions: Vec<RawFunction> = Vec::with_capacity(n);
    for f in 0..n {
        let k = rng.gen_range(spec.blocks_per_function.0..=spec.blocks_per_function.1);
        let base = next_block;
        next_block += k as u32;
        let blocks = (0..k)
            .map(|i| {
                let mut succ = Vec::new();
                if i + 1 < k {
                    succ.push(base + i as u32 + 1);
                    if i + 2 < k && rng.gen_bool(spec.branch_probability) {
                        succ.push(base + rng.gen_range(i + 2..k) as u32);
                    }
                }
                RawBlock {
                    id: base + i as u32,
                    succ,
                    calls: Vec::new(),
                }
            })
            .collect();
        let n_targets = rng.gen_range(spec.targets_per_function.0..=spec.targets_per_function.1);
        let targets = (0..n_targets)
            .map(|_| {
                let t = RawTarget {
                    id: next_target,
                    block: base + rng.gen_range(0..k) as u32,
                };
                next_target += 1;
                t
            })
            .collect();
        functions.push(RawFunction {
            id: f as u32,
            name: if f == 0 { "main".into() } else { format!("fn_{f}") },
            entry: base,
            blocks,
            targets,
        });
    }

    // Spanning tree over functions, then extra calls up to the density.
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut calls: Vec<Call> = Vec::new();
    for callee in 1..n {
        let caller = rng.gen_range(callee.saturating_sub(TREE_WINDOW)..callee);
        pairs.insert((caller, callee));
        calls.push(Call {
            caller,
            callee,
            indirect: rng.gen_bool(spec.indirect_edge_fraction),
        });
    }
    let extra = spec.total_calls().saturating_sub(n.saturating_sub(1));
    if n >= 2 {
        let mut attempts = 0;
        let mut added = 0;
        while added < extra && attempts < extra * 20 {
            attempts += 1;
            let caller = rng.gen_range(0..n);
            let callee = rng.gen_range(1..n);
            if caller == callee || !pairs.insert((caller, callee)) {
                continue;
            }
            calls.push(Call {
                caller,
                callee,
                indirect: rng.gen_bool(spec.indirect_edge_fraction),
            });
            added += 1;
        }
    }

    if spec.indirect_edge_fraction > 0.0 && n >= 2 && !has_indirect_only_function(n, &calls) {
        // Hide the last function behind indirect calls only.
        for c in calls.iter_mut().filter(|c| c.callee == n - 1) {
            c.indirect = true;
        }
    }

    let mut indirect_edges = Vec::new();
    for c in &calls {
        let f = &mut functions[c.caller];
        let site = rng.gen_range(0..f.blocks.len());
        if c.indirect {
            indirect_edges.push(RawIndirectEdge {
                from_fn: c.caller as u32,
                from_block: f.blocks[site].id,
                to_fn: c.callee as u32,
            });
        } else {
            f.blocks[site].calls.push(c.callee as u32);
        }
    }

    ProgramGraph::from_raw(&RawProgram {
        functions,
        indirect_edges,
    })
}

fn has_indirect_only_function(n: usize, calls: &[Call]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for c in calls.iter().filter(|c| !c.indirect) {
        adj[c.caller].push(c.callee);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(f) = stack.pop() {
        for &g in &adj[f] {
            if !seen[g] {
                seen[g] = true;
                stack.push(g);
            }
        }
    }
    seen.iter().any(|&s| !s)
}
