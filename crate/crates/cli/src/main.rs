//! Batch harness: profile loading, single runs, parameter sweeps, analog
//! comparisons, tracer comparisons, and allocation-trace replay, all
//! emitting deterministic CSV.

use std::io::Write;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use tagsim::alloc::{parse_alloc_trace, replay_alloc_trace, AllocPolicy};
use tagsim::analogs::{apply_analog, compare_analogs, AnalogKind};
use tagsim::isa::{CheckConfig, MteMode, Program};
use tagsim::tagmem::TaggedMemory;
use tagsim::tracer::{trace_run, TracerCosts, TracerKind};
use tagsim::uarch::{
    builtin_profile, builtin_profile_names, profile_from_toml, profile_to_toml, run_llbench,
    simulate_seeded, CoreProfile, CostReport, SimCore,
};
use tagsim::workloads::*;

#[derive(Parser)]
#[command(
    name = "tagsim",
    about = "Tagged-memory timing simulator harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one workload and report per-repetition rows plus a summary.
    Run(Box<RunArgs>),
    /// Sweep the linked-list benchmark grid and emit an overhead matrix.
    Sweep(SweepArgs),
    /// Compare analog predictions against simulated reality per workload.
    AnalogCompare(AnalogCompareArgs),
    /// Compare tracer designs on the sparse-trace workload.
    TraceCompare(TraceCompareArgs),
    /// Replay an allocation trace through the tagging allocator.
    ReplayAlloc(ReplayAllocArgs),
    /// List shipped profiles or export one as TOML.
    Profiles(ProfilesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Off,
    Sync,
    Async,
    Asymm,
}

impl From<ModeArg> for MteMode {
    fn from(m: ModeArg) -> MteMode {
        match m {
            ModeArg::Off => MteMode::Off,
            ModeArg::Sync => MteMode::Sync,
            ModeArg::Async => MteMode::Async,
            ModeArg::Asymm => MteMode::Asymm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalogArg {
    Hakc,
    Sfitag,
}

impl From<AnalogArg> for AnalogKind {
    fn from(a: AnalogArg) -> AnalogKind {
        match a {
            AnalogArg::Hakc => AnalogKind::HakcAnalog,
            AnalogArg::Sfitag => AnalogKind::SfiTagAnalog,
        }
    }
}

#[derive(Args, Clone)]
struct ProfileArgs {
    /// Shipped profile name.
    #[arg(long, default_value = "big_a715")]
    profile: String,
    /// Load the profile from a TOML file instead.
    #[arg(long)]
    profile_file: Option<std::path::PathBuf>,
    /// Disable store-to-load forwarding (the firmware experiment).
    #[arg(long)]
    stlf_off: bool,
}

impl ProfileArgs {
    fn load(&self) -> anyhow::Result<CoreProfile> {
        let mut profile = match &self.profile_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                profile_from_toml(&text).map_err(usage)?
            }
            None => builtin_profile(&self.profile).map_err(usage)?,
        };
        if self.stlf_off {
            profile.stlf_enabled = false;
            profile.name = format!("{}_stlf_off", profile.name);
        }
        Ok(profile)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Workload name: store_loop, llbench, memchain, buflock, scan,
    /// retag_scan, kernel_mix.
    #[arg(long)]
    workload: String,
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long, value_enum, default_value = "sync")]
    mode: ModeArg,
    /// Rewrite the program with a performance analog (runs with checks off).
    #[arg(long, value_enum)]
    analog: Option<AnalogArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: u64,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<std::path::PathBuf>,

    // Workload parameters.
    #[arg(long, default_value_t = 2000)]
    iters: u64,
    /// Store loop hits an untagged page instead of a tagged one.
    #[arg(long)]
    untagged: bool,
    /// Store loop: insert a store barrier after each store.
    #[arg(long)]
    barrier: bool,
    /// Linked-list length.
    #[arg(long, default_value_t = 4096)]
    el: u64,
    /// Per-node array bytes.
    #[arg(long, default_value_t = 256)]
    array: u64,
    /// Stride in bytes.
    #[arg(long, default_value_t = 16)]
    stride: u64,
    /// Chain kind for memchain: rar, waw, raw.
    #[arg(long, default_value = "raw")]
    kind: String,
    #[arg(long, default_value_t = 1 << 20)]
    buffer_bytes: u64,
    #[arg(long, default_value_t = 32)]
    rounds: u64,
    /// Buffer protection: insecure, copy, buflock.
    #[arg(long, default_value = "buflock")]
    protection: String,
    #[arg(long, default_value_t = 16 << 10)]
    scan_bytes: u64,
    #[arg(long, default_value_t = 52 << 10)]
    retag_bytes: u64,
    #[arg(long, default_value_t = 8)]
    repeats: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long, value_enum, default_value = "async")]
    mode: ModeArg,
    /// Per-node array sizes (bytes).
    #[arg(long, value_delimiter = ',', default_values_t = [256u64, 512, 1024])]
    a_values: Vec<u64>,
    /// Total footprints A*L in MiB.
    #[arg(long, value_delimiter = ',', default_values_t = [2u64, 4, 16, 32])]
    al_mib: Vec<u64>,
    /// Strides (bytes).
    #[arg(long, value_delimiter = ',', default_values_t = [4u64, 128])]
    s_values: Vec<u64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct AnalogCompareArgs {
    /// Profiles to include.
    #[arg(long, value_delimiter = ',', default_values_t = ["perf_x3".to_string(), "big_a715".to_string()])]
    profiles: Vec<String>,
    #[arg(long, value_enum, default_value = "sync")]
    mode: ModeArg,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct TraceCompareArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    /// Traced buffer sizes (bytes).
    #[arg(long, value_delimiter = ',', default_values_t = [64u64, 128, 256, 512, 1024])]
    sizes: Vec<u64>,
    /// Application accesses per traced access at the smallest size.
    #[arg(long, default_value_t = 3334)]
    density: u64,
    /// Also dump the event log of the largest run to this CSV path.
    #[arg(long)]
    event_log: Option<std::path::PathBuf>,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct ReplayAllocArgs {
    /// Trace file (`malloc <size>` / `free <id>` lines).
    #[arg(long)]
    file: std::path::PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tag only allocations at or below this many bytes.
    #[arg(long)]
    selective_threshold: Option<u64>,
    #[arg(long)]
    sticky_reuse: bool,
    #[arg(long)]
    exclude_previous_tag: bool,
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct ProfilesArgs {
    /// Export this profile as TOML.
    #[arg(long)]
    export: Option<String>,
}

#[derive(Debug, thiserror::Error)]
enum CliErrorKind {
    #[error("{0}")]
    Usage(tagsim::SimError),
    #[error("{0}")]
    Sim(tagsim::SimError),
}

fn usage(e: tagsim::SimError) -> anyhow::Error {
    anyhow::Error::new(CliErrorKind::Usage(e))
}

fn simerr(e: tagsim::SimError) -> anyhow::Error {
    anyhow::Error::new(CliErrorKind::Sim(e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .chain()
                .find_map(|c| c.downcast_ref::<CliErrorKind>())
                .map(|k| match k {
                    CliErrorKind::Usage(_) => 2,
                    CliErrorKind::Sim(_) => 3,
                })
                .unwrap_or(3);
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::AnalogCompare(args) => cmd_analog_compare(args),
        Command::TraceCompare(args) => cmd_trace_compare(args),
        Command::ReplayAlloc(args) => cmd_replay_alloc(args),
        Command::Profiles(args) => cmd_profiles(args),
    }
}

/// Emits the finished output in one shot so failures never leave partial
/// files behind.
fn emit(out: &Option<std::path::PathBuf>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let mut f = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            f.write_all(content.as_bytes())?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

/// A workload instance: the program, its memory image, and a description.
struct Workload {
    program: Program,
    mem: TaggedMemory,
    params: String,
}

fn build_workload(args: &RunArgs, seed: u64) -> anyhow::Result<Workload> {
    let w = args.workload.as_str();
    let (program, mem, params) = match w {
        "store_loop" => {
            let (p, m) = gen_store_loop(args.iters, !args.untagged, args.barrier).map_err(usage)?;
            (
                p,
                m,
                format!(
                    "iters={};tagged={};barrier={}",
                    args.iters, !args.untagged, args.barrier
                ),
            )
        }
        "llbench" => {
            let params = LLBenchParams {
                nodes: args.el,
                array_bytes: args.array,
                stride: args.stride,
                seed,
            };
            let bench = gen_llbench(&params).map_err(usage)?;
            (
                bench.traversal.program(),
                bench.mem,
                format!("L={};A={};S={}", args.el, args.array, args.stride),
            )
        }
        "memchain" => {
            let kind: MemChainKind = args.kind.parse().map_err(usage)?;
            let chain = gen_memchain(kind, args.buffer_bytes, seed).map_err(usage)?;
            (
                chain.walk.program(),
                chain.mem,
                format!("kind={};buffer={}", args.kind, args.buffer_bytes),
            )
        }
        "buflock" => {
            let protection: Protection = args.protection.parse().map_err(usage)?;
            let scenario = BufLockScenario {
                buffer_bytes: args.buffer_bytes,
                rounds: args.rounds,
                protection,
            };
            let (p, m) = gen_buflock(&scenario).map_err(usage)?;
            (
                p,
                m,
                format!(
                    "buffer={};rounds={};protection={}",
                    args.buffer_bytes, args.rounds, args.protection
                ),
            )
        }
        "scan" => {
            let (p, m) = gen_scan(args.scan_bytes, args.repeats).map_err(usage)?;
            (p, m, format!("bytes={};repeats={}", args.scan_bytes, args.repeats))
        }
        "retag_scan" => {
            let (p, m) = gen_retag_scan(args.scan_bytes, args.retag_bytes).map_err(usage)?;
            (
                p,
                m,
                format!("scan={};retag={}", args.scan_bytes, args.retag_bytes),
            )
        }
        "kernel_mix" => {
            let (p, m) = gen_kernel_mix(args.iters, args.iters).map_err(usage)?;
            (p, m, format!("iters={}", args.iters))
        }
        other => {
            return Err(usage(tagsim::SimError::Profile(format!(
                "unknown workload `{other}` (store_loop, llbench, memchain, buflock, scan, retag_scan, kernel_mix)"
            ))))
        }
    };
    Ok(Workload {
        program,
        mem,
        params,
    })
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let profile = args.profile.load()?;
    let mode: MteMode = args.mode.into();
    if !profile.supports(mode) {
        return Err(usage(tagsim::SimError::Profile(format!(
            "profile {} does not support mode {mode}",
            profile.name
        ))));
    }
    if args.reps == 0 {
        return Err(usage(tagsim::SimError::Profile(
            "reps must be positive".into(),
        )));
    }
    let cfg = if args.workload == "kernel_mix" {
        CheckConfig::user_faults_only()
    } else {
        CheckConfig::default()
    };

    let mut csv = format!(
        "profile,mode,workload,params,rep,{},slowdown\n",
        CostReport::CSV_HEADER
    );
    let mut cycles = Vec::new();
    let analog_tag = match args.analog {
        Some(a) => format!("+{}", AnalogKind::from(a).name()),
        None => String::new(),
    };
    for rep in 0..args.reps {
        let seed = args.seed.wrapping_add(rep);
        let mut w = build_workload(&args, seed)?;
        let (program, run_mode) = match args.analog {
            Some(a) => (apply_analog(&w.program, a.into()), MteMode::Off),
            None => (w.program.clone(), mode),
        };
        // Baseline (tag ops stripped, checks off) for the slowdown column.
        let base_report = {
            let base_program = tagsim::analogs::strip_tag_ops(&w.program);
            let mut base_w = build_workload(&args, seed)?;
            simulate_seeded(
                &base_program,
                &mut base_w.mem,
                &profile,
                &cfg,
                MteMode::Off,
                seed,
            )
            .map_err(simerr)?
        };
        let report = simulate_seeded(&program, &mut w.mem, &profile, &cfg, run_mode, seed)
            .map_err(simerr)?;
        cycles.push(report.cycles());
        csv.push_str(&format!(
            "{},{}{},{},{},{},{},{:.4}\n",
            profile.name,
            mode,
            analog_tag,
            args.workload,
            w.params,
            rep,
            report.csv_cells(),
            report.slowdown_vs(&base_report),
        ));
    }
    // Summary row with the median / min / max convention.
    let mut sorted = cycles.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    csv.push_str(&format!(
        "{},{}{},{},summary,median={:.2};min={:.2};max={:.2}\n",
        profile.name,
        mode,
        analog_tag,
        args.workload,
        median,
        sorted.first().unwrap(),
        sorted.last().unwrap()
    ));
    emit(&args.out, &csv)
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let profile = args.profile.load()?;
    let mode: MteMode = args.mode.into();
    if args.a_values.is_empty() || args.al_mib.is_empty() || args.s_values.is_empty() {
        return Err(usage(tagsim::SimError::Profile("empty sweep grid".into())));
    }

    // Cells are independent; run them on worker threads, then emit in
    // deterministic grid order.
    let mut cells: Vec<(u64, u64, u64)> = Vec::new();
    for &s in &args.s_values {
        for &a in &args.a_values {
            for &al in &args.al_mib {
                cells.push((s, a, al));
            }
        }
    }
    let results: Vec<anyhow::Result<(f64, f64, f64)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .iter()
            .map(|&(s, a, al)| {
                let profile = &profile;
                scope.spawn(move || {
                    let params = LLBenchParams {
                        nodes: (al << 20) / a,
                        array_bytes: a,
                        stride: s,
                        seed: args.seed,
                    };
                    params.validate().map_err(usage)?;
                    let run = run_llbench(&params, profile, mode).map_err(simerr)?;
                    Ok((run.overhead(), run.mte_on.cycles(), run.mte_off.cycles()))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut csv = String::from("S,A,L,total_mib,overhead,cycles_on,cycles_off\n");
    for ((s, a, al), result) in cells.iter().zip(results) {
        let (overhead, on, off) = result?;
        csv.push_str(&format!(
            "{},{},{},{},{:.4},{:.2},{:.2}\n",
            s,
            a,
            (al << 20) / a,
            al,
            overhead,
            on,
            off
        ));
    }
    emit(&args.out, &csv)
}

type MemMaker = Box<dyn Fn() -> TaggedMemory>;

fn cmd_analog_compare(args: AnalogCompareArgs) -> anyhow::Result<()> {
    let mode: MteMode = args.mode.into();
    let mut csv = String::from("workload,profile,mode,real,hakc,sfitag,hakc_err,sfitag_err\n");
    for name in &args.profiles {
        let profile = builtin_profile(name).map_err(usage)?;
        let suites: Vec<(&str, Program, MemMaker)> = vec![
            (
                "store_loop",
                gen_store_loop(2000, true, false).map_err(simerr)?.0,
                Box::new(|| gen_store_loop(2000, true, false).unwrap().1),
            ),
            (
                "scan",
                gen_scan(16 << 10, 8).map_err(simerr)?.0,
                Box::new(|| gen_scan(16 << 10, 8).unwrap().1),
            ),
            (
                "retag_scan",
                gen_retag_scan(16 << 10, 52 << 10).map_err(simerr)?.0,
                Box::new(|| gen_retag_scan(16 << 10, 52 << 10).unwrap().1),
            ),
        ];
        for (wname, program, make_mem) in suites {
            let run_mode = if profile.supports(mode) {
                mode
            } else {
                MteMode::Sync
            };
            let cmp =
                compare_analogs(wname, &program, &*make_mem, &profile, run_mode).map_err(simerr)?;
            csv.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.4},{:+.4},{:+.4}\n",
                cmp.workload,
                cmp.profile,
                cmp.mode,
                cmp.real_overhead,
                cmp.hakc_overhead,
                cmp.sfitag_overhead,
                cmp.hakc_error(),
                cmp.sfitag_error()
            ));
        }
    }
    emit(&args.out, &csv)
}

fn cmd_trace_compare(args: TraceCompareArgs) -> anyhow::Result<()> {
    let profile = args.profile.load()?;
    let costs = TracerCosts::default();
    let mut csv = String::from("traced_bytes,tracer,events,cycles,slowdown\n");
    let mut last_log = None;
    let smallest = args.sizes.first().copied().unwrap_or(64).max(8);
    for &size in &args.sizes {
        let density =
            ((args.density as f64) * (size as f64 / smallest as f64).sqrt()).round() as u64;
        let st = gen_sparse_trace(size, density.max(2)).map_err(usage)?;
        let baseline = {
            let mut m = st.mem.clone();
            simulate_seeded(
                &st.program,
                &mut m,
                &profile,
                &CheckConfig::default(),
                MteMode::Off,
                0,
            )
            .map_err(simerr)?
        };
        for kind in TracerKind::ALL {
            let mut m = st.mem.clone();
            let run = trace_run(&st.program, &mut m, &st.traced, kind, &costs, &profile)
                .map_err(simerr)?;
            csv.push_str(&format!(
                "{},{},{},{:.2},{:.4}\n",
                size,
                kind.name(),
                run.log.events.len(),
                run.report.cycles(),
                run.report.ticks as f64 / baseline.ticks as f64
            ));
            if Some(size) == args.sizes.iter().max().copied() && kind == TracerKind::MteSignal {
                last_log = Some(run.log);
            }
        }
    }
    if let (Some(path), Some(log)) = (&args.event_log, last_log) {
        std::fs::write(path, log.to_csv())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    emit(&args.out, &csv)
}

fn cmd_replay_alloc(args: ReplayAllocArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.file)
        .with_context(|| format!("reading {}", args.file.display()))?;
    let ops = parse_alloc_trace(&text).map_err(usage)?;
    let policy = AllocPolicy {
        tag_rng_seed: args.seed,
        selective_threshold: args.selective_threshold,
        sticky_reuse: args.sticky_reuse,
        exclude_previous_tag: args.exclude_previous_tag,
    };
    let mut mem = TaggedMemory::new();
    let (stats, tag_program) = replay_alloc_trace(&ops, policy, &mut mem).map_err(simerr)?;

    // Charge the tag-op stream through the timing model.
    let profile = args.profile.load()?;
    let mut core = SimCore::new(
        &mut mem,
        &profile,
        &CheckConfig::default(),
        MteMode::Sync,
        args.seed,
    );
    for op in &tag_program {
        core.step(op).map_err(simerr)?;
    }
    let report = core.report();

    let mut csv = String::from("mallocs,frees,tag_ops,reused_regions,tag_op_cycles\n");
    csv.push_str(&format!(
        "{},{},{},{},{:.2}\n",
        stats.mallocs,
        stats.frees,
        stats.tag_ops,
        stats.reused_regions,
        report.cycles()
    ));
    emit(&args.out, &csv)
}

fn cmd_profiles(args: ProfilesArgs) -> anyhow::Result<()> {
    match args.export {
        Some(name) => {
            let profile = builtin_profile(&name).map_err(usage)?;
            print!("{}", profile_to_toml(&profile));
        }
        None => {
            for name in builtin_profile_names() {
                println!("{name}");
            }
        }
    }
    Ok(())
}
