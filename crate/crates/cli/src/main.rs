//! `fishsched`: distance analysis, scheduler simulation and plot-data reports.
//!
//! Exit codes: 0 on success, 2 for bad arguments or unusable input files, 3
//! when an output cannot be written. Diagnostics go to stderr only.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fishsched_core::execution::parse_trace_dump;
use fishsched_core::simulator::compare::compare_campaigns;
use fishsched_core::simulator::report::{render, timeline_csv, ReportKind};
use fishsched_core::simulator::{
    generate_program, run_campaign_with, CampaignConfig, CampaignResult, MutationModel, SchedulerKind, SimWorld,
    SyntheticProgramSpec, STANDARD_DURATION,
};
use fishsched_core::static_distance::{load_distance_map, save_distance_map};
use fishsched_core::{
    build_distance_map, dsf, harmonic_distance, load_program, multi_target_distance, save_program, FunctionId,
    ProgramGraph, SchedulerConfig, Seed, TargetId, TargetRanking,
};
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(name = "fishsched", version, about = "Directed fuzzing seed scheduling: analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the static distance map of a program graph.
    Analyze {
        #[arg(long)]
        graph: PathBuf,
        /// Distance-map file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Query distances against a graph and its distance map.
    Distance(DistanceArgs),
    /// Run scheduler campaigns on a synthetic or supplied program.
    Simulate(SimulateArgs),
    /// Turn campaign results into plot-ready CSV.
    Report {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        /// Campaign result files.
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("query").required(true).args(["dff", "dsf", "multi", "harmonic"])))]
struct DistanceArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    map: PathBuf,
    /// Trace dump holding the seeds named by --dsf, --multi and --harmonic.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Function-to-function distance; functions by name or id.
    #[arg(long, num_args = 2, value_names = ["FROM", "TO"])]
    dff: Option<Vec<String>>,
    /// Seed-to-function distance.
    #[arg(long, num_args = 2, value_names = ["SEED", "FUNCTION"])]
    dsf: Option<Vec<String>>,
    /// Per-target distance vector; triggered state comes from the whole trace dump.
    #[arg(long, num_args = 2, value_names = ["SEED", "TARGETS"])]
    multi: Option<Vec<String>>,
    /// Harmonic-mean hop distance from a seed to all targets.
    #[arg(long, value_name = "SEED")]
    harmonic: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Scheduler {
    Fishfuzz,
    RoundRobin,
    AflFavor,
    HarmonicDirected,
}

impl From<Scheduler> for SchedulerKind {
    fn from(s: Scheduler) -> Self {
        match s {
            Scheduler::Fishfuzz => SchedulerKind::FishFuzz,
            Scheduler::RoundRobin => SchedulerKind::RoundRobin,
            Scheduler::AflFavor => SchedulerKind::AflFavor,
            Scheduler::HarmonicDirected => SchedulerKind::HarmonicDirected,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Energy,
    Phases,
    Growth,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// `standard` or a JSON synthetic-program spec file.
    #[arg(long, conflicts_with = "graph")]
    spec: Option<String>,
    /// Program graph file to fuzz instead of a generated one.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Scheduler::Fishfuzz, conflicts_with = "compare")]
    scheduler: Scheduler,
    /// Comma-separated schedulers to run over identical seeds.
    #[arg(long, value_enum, value_delimiter = ',')]
    compare: Vec<Scheduler>,
    /// Virtual ticks per campaign.
    #[arg(long, default_value_t = STANDARD_DURATION)]
    duration: u64,
    /// Campaigns per scheduler, with rng seeds BASE, BASE+1, ...
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// First campaign rng seed.
    #[arg(long, env = "FISHSCHED_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Override the generated program's function count.
    #[arg(long)]
    functions: Option<usize>,
    /// Override the generated program's rng seed.
    #[arg(long)]
    program_seed: Option<u64>,
    #[arg(long, default_value_t = SchedulerConfig::default().w_function)]
    w_function: u64,
    #[arg(long, default_value_t = SchedulerConfig::default().w_reach)]
    w_reach: u64,
    #[arg(long, default_value_t = SchedulerConfig::default().w_trigger)]
    w_trigger: u64,
    #[arg(long, default_value_t = SchedulerConfig::default().exploit_fraction)]
    exploit_fraction: f64,
    /// Keep triggered targets among exploitation candidates.
    #[arg(long)]
    exploit_include_triggered: bool,
    #[arg(long, default_value_t = SchedulerConfig::default().favored_bias)]
    favored_bias: f64,
    #[arg(long, default_value_t = 1)]
    executions_per_tick: u32,
    #[arg(long, default_value_t = MutationModel::default().locality)]
    locality: f64,
    #[arg(long, default_value_t = MutationModel::default().frontier_advance)]
    frontier_advance: f64,
    #[arg(long, default_value_t = MutationModel::default().trigger_probability)]
    trigger_probability: f64,
    /// Suppress the stdout summary.
    #[arg(long, short)]
    quiet: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }

    fn output(message: impl ToString) -> Self {
        Failure {
            code: 3,
            message: message.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure::output(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze { graph, out } => analyze(&graph, &out),
        Command::Distance(args) => distance(&args),
        Command::Simulate(args) => simulate(&args),
        Command::Report { kind, out, results } => report(kind, &out, &results),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("fishsched: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn analyze(graph_path: &Path, out: &Path) -> CliResult {
    let graph = load_program(graph_path).map_err(Failure::input)?;
    let map = build_distance_map(&graph);
    save_distance_map(&map, out).map_err(Failure::output)?;
    println!("functions: {}", graph.n_functions());
    println!("targets: {}", graph.targets().len());
    println!("finite dff pairs: {}", map.finite_pairs());
    Ok(())
}

fn resolve_function(graph: &ProgramGraph, text: &str) -> CliResult<FunctionId> {
    if let Some(f) = graph.function_by_name(text) {
        return Ok(f.id);
    }
    text.parse::<u32>()
        .ok()
        .map(FunctionId)
        .filter(|f| f.index() < graph.n_functions())
        .ok_or_else(|| Failure::input(format!("unknown function `{text}`")))
}

fn resolve_target(graph: &ProgramGraph, text: &str) -> CliResult<TargetId> {
    let t = text.trim();
    t.strip_prefix('t')
        .unwrap_or(t)
        .parse::<u32>()
        .ok()
        .map(TargetId)
        .filter(|t| t.index() < graph.targets().len())
        .ok_or_else(|| Failure::input(format!("unknown target `{text}`")))
}

fn find_seed<'a>(seeds: &'a [Seed], text: &str) -> CliResult<&'a Seed> {
    let id = fishsched_core::execution::parse_seed_id(text)
        .ok_or_else(|| Failure::input(format!("bad seed id `{text}`")))?;
    seeds
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Failure::input(format!("unknown seed `{text}`")))
}

fn distance(args: &DistanceArgs) -> CliResult {
    let graph = load_program(&args.graph).map_err(Failure::input)?;
    let map = load_distance_map(&args.map, &graph).map_err(Failure::input)?;
    let seeds = match &args.traces {
        Some(path) => {
            let seeds = parse_trace_dump(&read_file(path)?)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            for s in &seeds {
                s.trace.validate(&graph).map_err(|e| Failure::input(format!("seed {}: {e}", s.id)))?;
            }
            seeds
        }
        None => Vec::new(),
    };
    let need_traces = || {
        if args.traces.is_none() {
            Err(Failure::input("this query needs --traces"))
        } else {
            Ok(())
        }
    };

    if let Some(pair) = &args.dff {
        let a = resolve_function(&graph, &pair[0])?;
        let b = resolve_function(&graph, &pair[1])?;
        println!("{}", map.dff(a, b).map_err(Failure::input)?);
    } else if let Some(q) = &args.dsf {
        need_traces()?;
        let seed = find_seed(&seeds, &q[0])?;
        let f = resolve_function(&graph, &q[1])?;
        println!("{}", dsf(&seed.trace, f, &map).map_err(Failure::input)?);
    } else if let Some(q) = &args.multi {
        need_traces()?;
        let seed = find_seed(&seeds, &q[0])?;
        let targets = q[1]
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| resolve_target(&graph, t))
            .collect::<CliResult<Vec<_>>>()?;
        let mut ranking = TargetRanking::new(&graph);
        for s in &seeds {
            ranking.record_execution(&s.trace, 0).map_err(Failure::input)?;
        }
        let v = multi_target_distance(&seed.trace, &targets, &ranking, &map, &graph).map_err(Failure::input)?;
        for (t, d) in &v.entries {
            println!("{t} {d}");
        }
    } else if let Some(q) = &args.harmonic {
        need_traces()?;
        let seed = find_seed(&seeds, q)?;
        let all: Vec<TargetId> = graph.targets().iter().map(|t| t.id).collect();
        let h = harmonic_distance(&seed.trace, &all, &graph).map_err(Failure::input)?;
        println!("{}", format_real(h));
    }
    Ok(())
}

/// Nine decimals with trailing zeros trimmed, so `1.8` prints as `1.8`.
fn format_real(x: f64) -> String {
    if !x.is_finite() {
        return "inf".to_string();
    }
    let s = format!("{x:.9}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn program_for(args: &SimulateArgs) -> CliResult<ProgramGraph> {
    if let Some(path) = &args.graph {
        if args.functions.is_some() || args.program_seed.is_some() {
            return Err(Failure::input("--functions and --program-seed apply only to generated programs"));
        }
        return load_program(path).map_err(Failure::input);
    }
    let mut spec = match args.spec.as_deref() {
        None | Some("standard") => SyntheticProgramSpec::standard(),
        Some(path) => serde_json::from_str(&read_file(Path::new(path))?)
            .map_err(|e| Failure::input(format!("{path}: {e}")))?,
    };
    if let Some(n) = args.functions {
        spec.n_functions = n;
    }
    if let Some(s) = args.program_seed {
        spec.rng_seed = s;
    }
    generate_program(&spec).map_err(Failure::input)
}

fn simulate(args: &SimulateArgs) -> CliResult {
    let graph = program_for(args)?;
    let schedulers: Vec<SchedulerKind> = if args.compare.is_empty() {
        vec![args.scheduler.into()]
    } else {
        let mut s: Vec<SchedulerKind> = args.compare.iter().map(|&k| k.into()).collect();
        s.sort();
        s.dedup();
        s
    };
    if args.seeds == 0 {
        return Err(Failure::input("--seeds must be at least 1"));
    }
    let base = CampaignConfig {
        sched: SchedulerConfig {
            w_function: args.w_function,
            w_reach: args.w_reach,
            w_trigger: args.w_trigger,
            exploit_fraction: args.exploit_fraction,
            exploit_include_triggered: args.exploit_include_triggered,
            favored_bias: args.favored_bias,
            ..SchedulerConfig::default()
        },
        model: MutationModel {
            locality: args.locality,
            frontier_advance: args.frontier_advance,
            trigger_probability: args.trigger_probability,
            ..MutationModel::default()
        },
        executions_per_tick: args.executions_per_tick,
        ..CampaignConfig::new(SchedulerKind::FishFuzz, args.duration, 0)
    };
    base.validate().map_err(Failure::input)?;

    let jobs: Vec<CampaignConfig> = schedulers
        .iter()
        .flat_map(|&k| {
            (0..args.seeds).map(move |i| (k, args.seed.wrapping_add(i)))
        })
        .map(|(scheduler, rng_seed)| CampaignConfig {
            scheduler,
            rng_seed,
            ..base.clone()
        })
        .collect();
    let map = schedulers
        .contains(&SchedulerKind::FishFuzz)
        .then(|| build_distance_map(&graph));
    let world = SimWorld::new(&graph);
    let results: Vec<CampaignResult> = jobs
        .par_iter()
        .map(|cfg| run_campaign_with(&graph, map.as_ref(), &world, cfg))
        .collect::<Result<_, _>>()
        .map_err(Failure::input)?;

    fs::create_dir_all(&args.out).map_err(|e| Failure::output(format!("{}: {e}", args.out.display())))?;
    save_program(&graph, args.out.join("program.graph")).map_err(Failure::output)?;
    for r in &results {
        let stem = format!("{}-{}", r.scheduler, r.rng_seed);
        write_file(&args.out.join(format!("result-{stem}.json")), &r.to_json())?;
        write_file(&args.out.join(format!("timeline-{stem}.csv")), &timeline_csv(r))?;
    }
    if !args.compare.is_empty() && results.len() >= 2 {
        let report = compare_campaigns(&results).map_err(Failure::input)?;
        write_file(&args.out.join("comparison.csv"), &report.to_csv())?;
        write_file(&args.out.join("comparison.txt"), &report.to_table())?;
        if !args.quiet {
            print!("{}", report.to_table());
        }
    } else if !args.quiet {
        for r in &results {
            println!(
                "{} seed {}: coverage {} reached {} triggered {} queue {}",
                r.scheduler,
                r.rng_seed,
                r.coverage(),
                r.reached(),
                r.triggered(),
                r.queue.size
            );
        }
    }
    Ok(())
}

fn report(kind: Kind, out: &Path, paths: &[PathBuf]) -> CliResult {
    let results = paths
        .iter()
        .map(|p| CampaignResult::from_json(&read_file(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display()))))
        .collect::<CliResult<Vec<_>>>()?;
    let kind = match kind {
        Kind::Energy => ReportKind::Energy,
        Kind::Phases => ReportKind::Phases,
        Kind::Growth => ReportKind::Growth,
    };
    let csv = render(kind, &results).map_err(Failure::input)?;
    write_file(out, &csv)
}
