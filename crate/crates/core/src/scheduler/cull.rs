use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::execution::{dsf, Seed};
use crate::graph::ProgramGraph;
use crate::ids::{Distance, EdgeId, FunctionId, TargetId};
use crate::ranking::{TargetRanking, TriggeredFilter};
use crate::scheduler::{FunctionExplorationState, SchedulerConfig};
use crate::static_distance::StaticDistanceMap;

fn clear_favor(queue: &mut [Seed]) {
    for s in queue.iter_mut() {
        s.favor = false;
    }
}

fn favored_count(queue: &[Seed]) -> usize {
    queue.iter().filter(|s| s.favor).count()
}

/// Inter-function exploration pass: for every unexplored function that holds
/// targets, favor the seed closest to it by `dsf`. Ties go to the lower
/// execution time, then the lower seed id. Returns the number of favored seeds.
pub fn inter_function_cull(
    queue: &mut [Seed],
    fstate: &FunctionExplorationState,
    map: &StaticDistanceMap,
) -> usize {
    inter_function_cull_with(queue, fstate, |seed, f| {
        dsf(&seed.trace, f, map).unwrap_or(Distance::Infinite)
    })
}

/// [`inter_function_cull`] with a caller-supplied seed-to-function distance,
/// so campaigns can reuse cached per-seed distance rows.
pub fn inter_function_cull_with(
    queue: &mut [Seed],
    fstate: &FunctionExplorationState,
    mut distance: impl FnMut(&Seed, FunctionId) -> Distance,
) -> usize {
    clear_favor(queue);
    let functions: Vec<FunctionId> = fstate.unexplored_target_functions().collect();
    let mut winners = Vec::new();
    for f in functions {
        let best = queue
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let d = distance(s, f);
                d.is_finite().then_some(((d, s.exec_time, s.id), i))
            })
            .min();
        if let Some((_, i)) = best {
            winners.push(i);
        }
    }
    for i in winners {
        queue[i].favor = true;
    }
    favored_count(queue)
}

/// Exploitation pass: service the least-hit `ceil(n * fraction)` reached
/// targets, favoring for each the fastest seed whose trace reached it. If no
/// queued seed reached a serviced target, the seed with the smallest per-target
/// distance is favored instead.
pub fn exploitation_cull(
    queue: &mut [Seed],
    ranking: &TargetRanking,
    cfg: &SchedulerConfig,
    map: &StaticDistanceMap,
    graph: &ProgramGraph,
) -> Result<usize> {
    exploitation_cull_with(queue, ranking, cfg, |seed, t| {
        if ranking.state(t)?.triggered {
            return Ok(Distance::ZERO);
        }
        dsf(&seed.trace, graph.target(t)?.function, map)
    })
}

/// [`exploitation_cull`] with a caller-supplied per-target distance, used only
/// for the fallback when no seed reached a serviced target.
pub fn exploitation_cull_with(
    queue: &mut [Seed],
    ranking: &TargetRanking,
    cfg: &SchedulerConfig,
    mut distance: impl FnMut(&Seed, TargetId) -> Result<Distance>,
) -> Result<usize> {
    clear_favor(queue);
    let filter = if cfg.exploit_include_triggered {
        TriggeredFilter::Include
    } else {
        TriggeredFilter::Exclude
    };
    let candidates = ranking.order_by_hits(&ranking.reached_untriggered(filter))?;
    let threshold = cfg.exploit_threshold(candidates.len());

    let mut winners = Vec::with_capacity(threshold);
    for &t in &candidates[..threshold] {
        let fastest = queue
            .iter()
            .enumerate()
            .filter(|(_, s)| s.trace.targets_reached.contains(&t))
            .map(|(i, s)| ((s.exec_time, s.id), i))
            .min();
        if let Some((_, i)) = fastest {
            winners.push(i);
            continue;
        }
        let mut best: Option<((Distance, u64, crate::ids::SeedId), usize)> = None;
        for (i, s) in queue.iter().enumerate() {
            let d = distance(s, t)?;
            if d.is_finite() {
                let key = (d, s.exec_time, s.id);
                if best.as_ref().is_none_or(|(k, _)| key < *k) {
                    best = Some((key, i));
                }
            }
        }
        if let Some((_, i)) = best {
            winners.push(i);
        }
    }
    for i in winners {
        queue[i].favor = true;
    }
    Ok(favored_count(queue))
}

/// AFL-style culling: each covered edge elects the seed with the smallest
/// `exec_time * size`; walking edges in ascending order, an unclaimed edge's
/// winner is favored and claims all of its own edges.
pub fn intra_function_cull(queue: &mut [Seed]) -> usize {
    clear_favor(queue);
    let mut top_rated: BTreeMap<EdgeId, (u128, crate::ids::SeedId, usize)> = BTreeMap::new();
    for (i, s) in queue.iter().enumerate() {
        let key = (u128::from(s.exec_time) * u128::from(s.size), s.id, i);
        for &e in &s.trace.edges {
            top_rated
                .entry(e)
                .and_modify(|best| {
                    if (key.0, key.1) < (best.0, best.1) {
                        *best = key;
                    }
                })
                .or_insert(key);
        }
    }
    let mut claimed = std::collections::BTreeSet::new();
    for (e, &(_, _, i)) in &top_rated {
        if claimed.contains(e) {
            continue;
        }
        queue[i].favor = true;
        claimed.extend(queue[i].trace.edges.iter().copied());
    }
    favored_count(queue)
}

/// Index of the next seed to fuzz: uniform over favored seeds with
/// probability `favored_bias` when any are favored, otherwise uniform over the
/// whole queue.
pub fn select_next_seed<R: Rng + ?Sized>(queue: &[Seed], rng: &mut R, favored_bias: f64) -> Result<usize> {
    if queue.is_empty() {
        return Err(Error::EmptyQueue);
    }
    let favored: Vec<usize> = queue
        .iter()
        .enumerate()
        .filter(|(_, s)| s.favor)
        .map(|(i, _)| i)
        .collect();
    let use_favored = !favored.is_empty() && (favored_bias >= 1.0 || rng.gen_bool(favored_bias.max(0.0)));
    if use_favored {
        Ok(favored[rng.gen_range(0..favored.len())])
    } else {
        Ok(rng.gen_range(0..queue.len()))
    }
}
