//! Acceptance criteria, one `[PASS]`/`[FAIL]` line each. Runs as a plain
//! binary (`harness = false`) so the report reads top to bottom.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use fishsched_core::execution::parse_trace_dump;
use fishsched_core::scheduler::{
    exploitation_cull, inter_function_cull, phase_step, Phase, PhaseClock,
};
use fishsched_core::simulator::{
    gini, generate_program, run_campaign_with, Campaign, CampaignConfig, CampaignResult, SchedulerKind, SimWorld,
    SyntheticProgramSpec, STANDARD_CAMPAIGN_SEEDS,
};
use fishsched_core::{
    build_distance_map, dsf, harmonic_distance, multi_target_distance, Distance, ExecutionTrace,
    FunctionExplorationState, FunctionId, ProgramGraph, SchedulerConfig, Seed, SeedId, TargetId, TargetRanking,
    UpdateSummary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fishsched")
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin())
        .args(args)
        .env_remove("FISHSCHED_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`fishsched {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn to_option(d: Distance) -> Option<u64> {
    d.finite()
}

/// Reference `dsf` from an all-pairs oracle table.
fn oracle_dsf(table: &[Vec<Option<u64>>], trace: &ExecutionTrace, f: FunctionId) -> Option<u64> {
    if trace.functions.contains(&f) {
        return Some(0);
    }
    let sources: Vec<FunctionId> = if trace.functions.is_empty() {
        vec![FunctionId(0)]
    } else {
        trace.functions.iter().copied().collect()
    };
    sources.iter().filter_map(|s| table[s.index()][f.index()]).min()
}

fn random_functions(rng: &mut ChaCha8Rng, g: &ProgramGraph, max: usize) -> BTreeSet<FunctionId> {
    let n = g.n_functions();
    (0..rng.gen_range(0..=max.min(n)))
        .map(|_| FunctionId(rng.gen_range(0..n) as u32))
        .collect()
}

fn random_trace(rng: &mut ChaCha8Rng, g: &ProgramGraph) -> ExecutionTrace {
    let mut t = ExecutionTrace::from_functions(random_functions(rng, g, 4));
    for target in g.targets() {
        if t.functions.contains(&target.function) && rng.gen_bool(0.6) {
            t.targets_reached.insert(target.id);
            if rng.gen_bool(0.15) {
                t.targets_triggered.insert(target.id);
            }
        }
    }
    t
}

fn harmonic_baseline() -> Outcome {
    let g = common::two_seeds();
    let seeds = parse_trace_dump(&fs::read_to_string(common::fixture("two_seeds.traces")).unwrap()).map_err(|e| e.to_string())?;
    let all: Vec<TargetId> = g.targets().iter().map(|t| t.id).collect();
    let s1 = harmonic_distance(&seeds[0].trace, &all, &g).map_err(|e| e.to_string())?;
    let s2 = harmonic_distance(&seeds[1].trace, &all, &g).map_err(|e| e.to_string())?;
    ensure((s1 - 1.8).abs() < 1e-9, || format!("s1 = {s1}, expected 1.8"))?;
    ensure((s2 - 2.25).abs() < 1e-9, || format!("s2 = {s2}, expected 2.25"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let map = dir.path().join("two_seeds.map");
    let graph = common::fixture("two_seeds.graph");
    let traces = common::fixture("two_seeds.traces");
    let (graph, traces, map) = (graph.to_str().unwrap(), traces.to_str().unwrap(), map.to_str().unwrap());
    run_cli(&["analyze", "--graph", graph, "--out", map])?;
    for (seed, want) in [("s1", "1.8"), ("s2", "2.25")] {
        let out = run_cli(&["distance", "--graph", graph, "--map", map, "--traces", traces, "--harmonic", seed])?;
        ensure(out.trim() == want, || format!("cli printed {:?} for {seed}", out.trim()))?;
    }
    Ok(format!("s1 = {s1}, s2 = {s2}"))
}

fn dff_oracle() -> Outcome {
    let mut pairs = 0usize;
    let mut finite = 0usize;
    for seed in 0..200u64 {
        let g = common::random_program(seed, 50, 8, 0.3);
        let map = build_distance_map(&g);
        let want = common::oracle_dff(&g);
        for (a, row) in want.iter().enumerate() {
            for (b, &w) in row.iter().enumerate() {
                let got = to_option(map.dff(FunctionId(a as u32), FunctionId(b as u32)).map_err(|e| e.to_string())?);
                ensure(got == w, || format!("graph {seed}: dff(f{a}, f{b}) = {got:?}, oracle {w:?}"))?;
                pairs += 1;
                finite += usize::from(w.is_some());
            }
        }
    }
    Ok(format!("200 graphs, {pairs} pairs ({finite} finite)"))
}

fn distance_contracts() -> Outcome {
    let mut checks = 0usize;
    for case in 0..1000u64 {
        let g = common::random_program(case ^ 0xd15, 14, 6, 0.3);
        let map = build_distance_map(&g);
        let table = common::oracle_dff(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let trace = ExecutionTrace::from_functions(random_functions(&mut rng, &g, 4));
        for f in (0..g.n_functions()).map(|i| FunctionId(i as u32)) {
            let d = dsf(&trace, f, &map).map_err(|e| e.to_string())?;
            ensure(to_option(d) == oracle_dsf(&table, &trace, f), || {
                format!("case {case}: dsf to {f} = {d}")
            })?;
            let min_is_zero = if trace.functions.is_empty() {
                table[0][f.index()] == Some(0)
            } else {
                trace.functions.iter().any(|s| table[s.index()][f.index()] == Some(0))
            };
            ensure(d.is_zero() == (trace.functions.contains(&f) || min_is_zero), || {
                format!("case {case}: zero equivalence broken for {f}")
            })?;
            checks += 1;
        }

        let mut ranking = TargetRanking::new(&g);
        for _ in 0..4 {
            ranking.record_execution(&random_trace(&mut rng, &g), 0).map_err(|e| e.to_string())?;
        }
        let all: Vec<TargetId> = g.targets().iter().map(|t| t.id).collect();
        let full = multi_target_distance(&trace, &all, &ranking, &map, &g).map_err(|e| e.to_string())?;
        for &t in &all {
            let d = full.get(t).ok_or("missing target")?;
            if ranking.state(t).unwrap().triggered {
                ensure(d.is_zero(), || format!("case {case}: triggered {t} maps to {d}"))?;
            } else {
                let owner = g.target(t).unwrap().function;
                ensure(to_option(d) == oracle_dsf(&table, &trace, owner), || {
                    format!("case {case}: {t} maps to {d}")
                })?;
            }
            checks += 1;
        }
        let (left, right): (Vec<TargetId>, Vec<TargetId>) = all.iter().partition(|_| rng.gen_bool(0.5));
        for part in [left, right] {
            let v = multi_target_distance(&trace, &part, &ranking, &map, &g).map_err(|e| e.to_string())?;
            ensure(v.len() == part.len(), || format!("case {case}: restricted vector has wrong length"))?;
            for &t in &part {
                ensure(v.get(t) == full.get(t), || format!("case {case}: restriction differs at {t}"))?;
            }
        }
    }
    Ok(format!("1000 cases, {checks} distance checks"))
}

fn favored_ids(queue: &[Seed]) -> BTreeSet<SeedId> {
    queue.iter().filter(|s| s.favor).map(|s| s.id).collect()
}

fn cull_fidelity() -> Outcome {
    let cfg = SchedulerConfig::default();
    let mut serviced_total = 0usize;
    let mut fallbacks = 0usize;
    for case in 0..500u64 {
        let g = common::random_program(case ^ 0xc011, 12, 6, 0.3);
        let map = build_distance_map(&g);
        let table = common::oracle_dff(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let mut queue: Vec<Seed> = (0..rng.gen_range(1..12))
            .map(|i| {
                let mut s = Seed::new(SeedId(i), rng.gen_range(1..6), 1, random_trace(&mut rng, &g));
                s.favor = rng.gen_bool(0.5);
                s
            })
            .collect();

        let mut fstate = FunctionExplorationState::new(&g);
        fstate.record(&ExecutionTrace::from_functions(random_functions(&mut rng, &g, 5)));
        let mut want = BTreeSet::new();
        for f in fstate.unexplored_target_functions() {
            let best = queue
                .iter()
                .filter_map(|s| oracle_dsf(&table, &s.trace, f).map(|d| (d, s.exec_time, s.id)))
                .min();
            want.extend(best.map(|b| b.2));
        }
        inter_function_cull(&mut queue, &fstate, &map);
        let got = favored_ids(&queue);
        ensure(got == want, || format!("case {case}: inter favored {got:?}, scan {want:?}"))?;

        let mut ranking = TargetRanking::new(&g);
        for s in &queue {
            ranking.record_execution(&s.trace, 0).map_err(|e| e.to_string())?;
        }
        for _ in 0..rng.gen_range(0..6) {
            ranking.record_execution(&random_trace(&mut rng, &g), 0).map_err(|e| e.to_string())?;
        }
        let mut candidates: Vec<(u64, TargetId)> = ranking
            .states()
            .filter(|(_, s)| s.reached && !s.triggered)
            .map(|(t, s)| (s.hits, t))
            .collect();
        candidates.sort();
        let quota = candidates.len().div_ceil(5);
        let mut want = BTreeSet::new();
        for &(_, t) in &candidates[..quota] {
            let fastest = queue
                .iter()
                .filter(|s| s.trace.targets_reached.contains(&t))
                .map(|s| (s.exec_time, s.id))
                .min();
            if let Some((_, id)) = fastest {
                want.insert(id);
                continue;
            }
            fallbacks += 1;
            let owner = g.target(t).unwrap().function;
            let nearest = queue
                .iter()
                .filter_map(|s| oracle_dsf(&table, &s.trace, owner).map(|d| (d, s.exec_time, s.id)))
                .min();
            want.extend(nearest.map(|b| b.2));
        }
        for s in &mut queue {
            s.favor = true;
        }
        exploitation_cull(&mut queue, &ranking, &cfg, &map, &g).map_err(|e| e.to_string())?;
        let got = favored_ids(&queue);
        ensure(got == want, || format!("case {case}: exploitation favored {got:?}, scan {want:?}"))?;
        serviced_total += quota;
    }
    Ok(format!("500 states, {serviced_total} targets serviced, {fallbacks} distance fallbacks"))
}

fn phase_replay() -> Outcome {
    let cfg = SchedulerConfig::default();
    let events: BTreeMap<u64, UpdateSummary> = [
        (500, UpdateSummary { new_functions: 1, ..Default::default() }),
        (4_000, UpdateSummary { newly_reached: 1, ..Default::default() }),
        (8_000, UpdateSummary { newly_triggered: 1, ..Default::default() }),
        (18_500, UpdateSummary { new_functions: 2, ..Default::default() }),
    ]
    .into_iter()
    .collect();
    let golden = vec![
        (3_500, Phase::IntraExplore),
        (5_000, Phase::Exploit),
        (14_000, Phase::InterExplore),
        (17_000, Phase::IntraExplore),
        (18_000, Phase::Exploit),
        (18_500, Phase::InterExplore),
    ];
    let mut phase = Phase::InterExplore;
    let mut clock = PhaseClock::starting_at(0);
    let mut transitions = Vec::new();
    for now in 1..=21_000u64 {
        let summary = events.get(&now).copied().unwrap_or_default();
        let next = phase_step(phase, &mut clock, now, &cfg, &summary);
        if next != phase {
            transitions.push((now, next));
        }
        phase = next;
    }
    ensure(transitions == golden, || format!("timeline {transitions:?}"))?;
    Ok(format!("{} transitions", transitions.len()))
}

struct Standard {
    results: BTreeMap<(SchedulerKind, u64), CampaignResult>,
}

fn standard_campaigns() -> Result<Standard, String> {
    let g = generate_program(&SyntheticProgramSpec::standard()).map_err(|e| e.to_string())?;
    let map = build_distance_map(&g);
    let world = SimWorld::new(&g);
    let jobs: Vec<(SchedulerKind, u64)> = SchedulerKind::ALL
        .into_iter()
        .flat_map(|k| STANDARD_CAMPAIGN_SEEDS.into_iter().map(move |s| (k, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(k, s)| {
            run_campaign_with(&g, Some(&map), &world, &CampaignConfig::standard(k, s))
                .map(|r| ((k, s), r))
                .map_err(|e| e.to_string())
        })
        .collect::<Result<BTreeMap<_, _>, String>>()?;
    Ok(Standard { results })
}

fn energy_balance(std: &Standard) -> Outcome {
    let mut fewer = 0;
    let mut flatter = 0;
    let mut detail = Vec::new();
    for seed in STANDARD_CAMPAIGN_SEEDS {
        let ff = &std.results[&(SchedulerKind::FishFuzz, seed)];
        let afl = &std.results[&(SchedulerKind::AflFavor, seed)];
        fewer += usize::from(ff.never_hit() < afl.never_hit());
        let (gf, ga) = (gini(&ff.reachable_hits()), gini(&afl.reachable_hits()));
        flatter += usize::from(gf <= ga);
        detail.push(format!("{}/{}", ff.never_hit(), afl.never_hit()));
    }
    let summary = format!("fewer never-hit {fewer}/10, gini <= {flatter}/10 (never-hit {})", detail.join(" "));
    ensure(fewer >= 8 && flatter >= 8, || summary.clone())?;
    Ok(summary)
}

fn directional_reach(std: &Standard) -> Outcome {
    let mut vs_rr = 0;
    let mut vs_harm = 0;
    for seed in STANDARD_CAMPAIGN_SEEDS {
        let ff = std.results[&(SchedulerKind::FishFuzz, seed)].reached();
        vs_rr += usize::from(ff >= std.results[&(SchedulerKind::RoundRobin, seed)].reached());
        vs_harm += usize::from(ff >= std.results[&(SchedulerKind::HarmonicDirected, seed)].reached());
    }
    let summary = format!("reach >= round_robin {vs_rr}/10, >= harmonic_directed {vs_harm}/10");
    ensure(vs_rr >= 8 && vs_harm >= 8, || summary.clone())?;
    Ok(summary)
}

fn indirect_approximation() -> Outcome {
    let mut counts = Vec::new();
    for program_seed in [2022u64, 7, 31] {
        let spec = SyntheticProgramSpec {
            n_functions: 120,
            rng_seed: program_seed,
            ..SyntheticProgramSpec::standard()
        };
        let g = generate_program(&spec).map_err(|e| e.to_string())?;
        let map = build_distance_map(&g);
        let world = SimWorld::new(&g);
        let entry = g.entry_function().ok_or("no entry function")?;
        let static_reach = g.static_reachable(entry);
        let cfg = CampaignConfig::new(SchedulerKind::FishFuzz, 12_000, program_seed);
        let mut campaign = Campaign::new(&g, Some(&map), &world, cfg).map_err(|e| e.to_string())?;
        let mut seen: BTreeSet<(SeedId, FunctionId, FunctionId)> = BTreeSet::new();
        while !campaign.is_done() {
            campaign.step().map_err(|e| e.to_string())?;
            if campaign.now() % 500 != 0 {
                continue;
            }
            for s in campaign.queue() {
                let fns = &s.trace.functions;
                for &landing in fns.iter().filter(|f| !static_reach[f.index()]) {
                    for f in (0..g.n_functions()).map(|i| FunctionId(i as u32)) {
                        if fns.contains(&f) {
                            continue;
                        }
                        let via = map.dff(landing, f).map_err(|e| e.to_string())?;
                        let unique = fns
                            .iter()
                            .filter(|&&o| o != landing)
                            .all(|&o| !map.dff(o, f).unwrap().is_finite());
                        if !via.is_finite() || !unique {
                            continue;
                        }
                        let d = dsf(&s.trace, f, &map).map_err(|e| e.to_string())?;
                        ensure(d == via, || {
                            format!("seed {} through {landing}: dsf to {f} = {d}, dff = {via}", s.id)
                        })?;
                        seen.insert((s.id, landing, f));
                    }
                }
            }
        }
        ensure(seen.len() >= 20, || format!("program {program_seed}: only {} occurrences", seen.len()))?;
        counts.push(seen.len().to_string());
    }
    Ok(format!("occurrences per campaign: {}", counts.join(", ")))
}

fn dir_snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = fs::read(entry.path()).map_err(|e| e.to_string())?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let two_seeds = common::fixture("two_seeds.graph");
    let configs: Vec<Vec<&str>> = vec![
        vec!["--spec", "standard", "--functions", "80", "--duration", "3000", "--seed", "5"],
        vec!["--compare", "fishfuzz,afl_favor,round_robin,harmonic_directed", "--seeds", "2", "--functions", "60", "--duration", "2000"],
        vec!["--graph", two_seeds.to_str().unwrap(), "--scheduler", "harmonic_directed", "--duration", "1500", "--seeds", "3"],
    ];
    let mut files = 0;
    for (i, flags) in configs.iter().enumerate() {
        let mut snapshots = Vec::new();
        let mut stdouts = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let mut args = vec!["simulate", "--quiet", "--out", dir.path().to_str().unwrap()];
            args.extend(flags.iter().copied());
            stdouts.push(run_cli(&args)?);
            snapshots.push(dir_snapshot(dir.path())?);
        }
        ensure(!snapshots[0].is_empty(), || format!("config {i} wrote no files"))?;
        ensure(snapshots[0] == snapshots[1], || {
            let a: Vec<_> = snapshots[0].keys().collect();
            format!("config {i}: outputs differ ({a:?})")
        })?;
        ensure(stdouts[0] == stdouts[1], || format!("config {i}: stdout differs"))?;
        files += snapshots[0].len();
    }
    Ok(format!("3 configs, {files} files identical across reruns"))
}

fn report(name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (ok, detail) = match outcome {
        Ok(d) if elapsed <= budget => (true, d),
        Ok(d) => (false, format!("{d}; over budget of {budget:?}")),
        Err(e) => (false, e),
    };
    println!(
        "[{}] {name} ({:.2}s): {detail}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    ok
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= report("hand-encoded example harmonic baseline", Duration::from_secs(1), harmonic_baseline);
    ok &= report("static distance matches shortest-path oracle", Duration::from_secs(30), dff_oracle);
    ok &= report("seed and multi-target distance contracts", Duration::from_secs(10), distance_contracts);
    ok &= report("cull passes match exhaustive scans", Duration::from_secs(10), cull_fidelity);
    ok &= report("phase machine golden replay", Duration::from_secs(1), phase_replay);

    let start = Instant::now();
    let standard = standard_campaigns();
    let shared = start.elapsed();
    match standard {
        Ok(std) => {
            let budget = Duration::from_secs(300).saturating_sub(shared);
            ok &= report("energy balance against afl_favor", budget, || energy_balance(&std));
            ok &= report("directional reach against round_robin and harmonic_directed", budget, || {
                directional_reach(&std)
            });
            println!("       (40 shared standard campaigns took {:.1}s)", shared.as_secs_f64());
        }
        Err(e) => {
            println!("[FAIL] energy balance against afl_favor: {e}");
            println!("[FAIL] directional reach against round_robin and harmonic_directed: {e}");
            ok = false;
        }
    }

    ok &= report("indirect call approximation", Duration::from_secs(120), indirect_approximation);
    ok &= report("simulate output is byte-for-byte repeatable", Duration::from_secs(120), determinism);

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
