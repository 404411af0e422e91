//! cdnasim: bank-conflict analysis, swizzle search, phase/bank solving,
//! chiplet grid scheduling, cache simulation and wave-schedule planning from
//! one entry point.
//!
//! Exit codes: 0 success, 1 domain error (message on stderr), 2 usage error.

mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdnasim_core::cachesim::{self, CacheConfig, GemmProblem, ScheduleKind};
use cdnasim_core::config::Registries;
use cdnasim_core::conflict::{
    self, BroadcastPolicy, ConstraintKind, SearchOutcome, SwizzleConstraint, XorBlockSpace,
    DEFAULT_SEARCH_CAP,
};
use cdnasim_core::layout::{MfmaShape, SharedTile, Swizzle};
use cdnasim_core::machine::DType;
use cdnasim_core::phases::{
    solve_banks, solve_phases, BuiltinOracle, ConflictOracle, SolverOptions, TraceOracle,
};
use cdnasim_core::sched::{build_row_major, build_schedule, GridConfig, SwizzleParams};
use cdnasim_core::waves::{
    pingpong_utilization, register_feasibility, Cluster, ClusterKind, PingPongTimeline, WavePlan,
};

use output::{emit, round4};

#[derive(Parser)]
#[command(
    name = "cdnasim",
    version,
    about = "Desk-scale CDNA kernel-design analysis"
)]
struct Cli {
    /// JSON config with extra machines, instructions or layouts.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count bank conflicts for a (layout, tile, swizzle, instruction) quadruple.
    AnalyzeSwizzle(AnalyzeArgs),
    /// Search the xor_block family for a conflict-free swizzle.
    SearchSwizzle(SearchArgs),
    /// Recover an instruction's phase partition and bank count from an oracle.
    SolvePhases(SolveArgs),
    /// Emit a block schedule as CSV (issue, row, col, xcd).
    Schedule(ScheduleArgs),
    /// Simulate the L2/LLC hierarchy for a GEMM schedule.
    CacheSim(CacheSimArgs),
    /// Register-budget feasibility report for a wave plan.
    Plan(PlanArgs),
    /// Occupancy of an alternating compute/memory timeline.
    Pingpong(PingpongArgs),
    /// Dump a layout's lane-ownership grid as CSV.
    DumpLayout(DumpArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    layout: String,
    #[arg(long)]
    instr: String,
    /// identity | row_half_swap:R=8,H=32 | xor_block:S=7,M=3,T=3,G=8
    #[arg(long, default_value = "identity")]
    swizzle: String,
    /// Row pitch in bytes (defaults to the dense minimum).
    #[arg(long)]
    pitch: Option<u32>,
    /// Slotted column packing as ELEMS_PER_SLOT,SLOT_STRIDE_BYTES
    /// (e.g. 16,16 for the FP6 dwordx3 tile).
    #[arg(long)]
    slotted: Option<String>,
    /// broadcast (same-word reads are free) or strict.
    #[arg(long, default_value = "broadcast")]
    broadcast: String,
}

#[derive(Args)]
struct SearchArgs {
    /// LAYOUT:INSTR or LAYOUT:INSTR:contiguity-only; repeatable.
    #[arg(long = "constraint", required = true)]
    constraints: Vec<String>,
    /// Contiguous run length every wide access must keep (bytes). Defaults to
    /// the widest bytes_per_lane among the constraints.
    #[arg(long)]
    contiguity_bytes: Option<u32>,
    /// Swizzle block granularity in bytes (8 = 64-bit).
    #[arg(long, default_value_t = 8)]
    granularity: u32,
    #[arg(long, default_value_t = 3)]
    s_min: u32,
    #[arg(long, default_value_t = 10)]
    s_max: u32,
    #[arg(long, default_value_t = 1)]
    m_min: u32,
    #[arg(long, default_value_t = 15)]
    m_max: u32,
    #[arg(long, default_value_t = 10)]
    t_max: u32,
    /// Abort if the parameter space exceeds this many candidates.
    #[arg(long, default_value_t = DEFAULT_SEARCH_CAP)]
    cap: u64,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instr: String,
    /// builtin or trace:<csv file>.
    #[arg(long, default_value = "builtin")]
    oracle: String,
    #[arg(long, default_value_t = 1024)]
    probe_stride_bytes: u32,
    #[arg(long, default_value_t = 512)]
    probe_horizon: u32,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    m: u32,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    block_m: u32,
    #[arg(long)]
    block_n: u32,
    #[arg(long, default_value_t = 1)]
    w: u32,
    #[arg(long, default_value_t = 1)]
    c: u32,
    #[arg(long, default_value_t = 8)]
    nxcd: u32,
    /// row-major bypasses the remap.
    #[arg(long)]
    baseline: Option<String>,
}

#[derive(Args)]
struct CacheSimArgs {
    #[arg(long, default_value = "mi355x")]
    preset: String,
    #[arg(long)]
    m: u32,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    k: u32,
    #[arg(long)]
    block_m: u32,
    #[arg(long)]
    block_n: u32,
    #[arg(long)]
    block_k: u32,
    #[arg(long, default_value = "bf16")]
    dtype: String,
    /// rowmajor or alg1:W,C.
    #[arg(long, default_value = "rowmajor")]
    schedule: String,
    /// Sweep instead: W values and C values as "1,2,4x8,16" (WsxCs).
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    cus_per_xcd: Option<u32>,
    #[arg(long)]
    l2_bytes: Option<u64>,
    #[arg(long)]
    llc_bytes: Option<u64>,
    #[arg(long, default_value_t = 128)]
    line_bytes: u32,
    /// csv (default) or json.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    producers: u32,
    #[arg(long)]
    consumers: u32,
    #[arg(long)]
    out_m: u32,
    #[arg(long)]
    out_n: u32,
    /// MFMA shape, e.g. 16x16x32.
    #[arg(long, default_value = "16x16x32")]
    mfma: String,
    #[arg(long, default_value = "bf16")]
    dtype: String,
    #[arg(long, default_value_t = 1)]
    depth: u32,
    #[arg(long)]
    overhead: Option<u32>,
    #[arg(long, default_value = "mi355x")]
    preset: String,
}

#[derive(Args)]
struct PingpongArgs {
    /// CSV of clusters: group,kind,duration (kind: compute|memory).
    #[arg(long)]
    clusters: String,
    /// Also write the event trace CSV here.
    #[arg(long)]
    trace: Option<String>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    layout: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => match emit(cli.output.as_deref(), &text) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("cdnasim: {e}");
                ExitCode::FAILURE
            }
        },
        Err(e) => {
            eprintln!("cdnasim: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<String> {
    let mut registries = Registries::shipped()?;
    if let Some(path) = &cli.config {
        registries.load_file(path)?;
    }
    match &cli.command {
        Command::AnalyzeSwizzle(args) => analyze_swizzle(args, &registries),
        Command::SearchSwizzle(args) => search_swizzle(args, &registries),
        Command::SolvePhases(args) => solve(args, &registries),
        Command::Schedule(args) => schedule(args),
        Command::CacheSim(args) => cache_sim(args, &registries),
        Command::Plan(args) => plan(args, &registries),
        Command::Pingpong(args) => pingpong(args),
        Command::DumpLayout(args) => {
            let layout = registries.layouts.get(&args.layout)?;
            Ok(layout.dump_grid_csv())
        }
    }
}

fn build_tile(
    args: &AnalyzeArgs,
    registries: &Registries,
    swizzle: Swizzle,
) -> anyhow::Result<SharedTile> {
    let layout = registries.layouts.get(&args.layout)?;
    let tile = if let Some(spec) = &args.slotted {
        let (elems, stride) = spec
            .split_once(',')
            .ok_or_else(|| anyhow::anyhow!("--slotted expects ELEMS,STRIDE"))?;
        SharedTile::slotted(
            layout.rows,
            layout.cols,
            layout.dtype,
            elems.trim().parse()?,
            stride.trim().parse()?,
            swizzle,
        )?
    } else if let Some(pitch) = args.pitch {
        SharedTile::with_pitch(layout.rows, layout.cols, layout.dtype, pitch, swizzle)?
    } else {
        SharedTile::for_layout(layout, swizzle)?
    };
    Ok(tile)
}

/// Accepts the core swizzle specs plus `custom:FILE` where FILE holds a JSON
/// array mapping each byte offset to its image.
fn parse_swizzle(spec: &str) -> anyhow::Result<Swizzle> {
    if let Some(path) = spec.strip_prefix("custom:") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read swizzle table {path}: {e}"))?;
        let table: Vec<u32> = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("swizzle table {path}: {e}"))?;
        return Ok(Swizzle::CustomTable(table));
    }
    Ok(Swizzle::parse(spec)?)
}

fn analyze_swizzle(args: &AnalyzeArgs, registries: &Registries) -> anyhow::Result<String> {
    let layout = registries.layouts.get(&args.layout)?;
    let instr = registries.instructions.get(&args.instr)?;
    let swizzle = parse_swizzle(&args.swizzle)?;
    let policy = BroadcastPolicy::parse(&args.broadcast)?;
    let tile = build_tile(args, registries, swizzle)?;
    if matches!(tile.swizzle, Swizzle::CustomTable(_)) {
        tile.verify_swizzle_bijective()?;
    }
    let report = conflict::analyze(layout, &tile, instr, policy)?;
    let waste = conflict::bank_waste(layout, &tile, instr)?;
    Ok(output::conflict_json(
        &args.layout,
        &args.instr,
        &tile.swizzle.label(),
        &report,
        waste,
    ))
}

fn search_swizzle(args: &SearchArgs, registries: &Registries) -> anyhow::Result<String> {
    let mut constraints = Vec::new();
    for spec in &args.constraints {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            anyhow::bail!("constraint `{spec}` is not LAYOUT:INSTR[:contiguity-only]");
        }
        let kind = match parts.get(2) {
            None => ConstraintKind::ConflictFree,
            Some(&"contiguity-only") => ConstraintKind::ContiguityOnly,
            Some(other) => anyhow::bail!("unknown constraint kind `{other}`"),
        };
        let layout = registries.layouts.get(parts[0])?.clone();
        let instr = registries.instructions.get(parts[1])?.clone();
        constraints.push(SwizzleConstraint {
            layout,
            instr,
            kind,
        });
    }
    let mut space = XorBlockSpace::at_granularity(args.granularity);
    space.shift_range = (args.s_min, args.s_max);
    space.mask_range = (args.m_min, args.m_max);
    space.lshift_range = (space.lshift_range.0, args.t_max);
    let outcome = conflict::search_swizzle(&space, &constraints, args.contiguity_bytes, args.cap)?;
    // Re-verify the witness through the analyzer before reporting it.
    if let SearchOutcome::Found { swizzle, .. } = &outcome {
        for constraint in &constraints {
            if constraint.kind == ConstraintKind::ConflictFree {
                let tile = SharedTile::for_layout(&constraint.layout, swizzle.clone())?;
                let report = conflict::analyze(
                    &constraint.layout,
                    &tile,
                    &constraint.instr,
                    BroadcastPolicy::Broadcast,
                )?;
                anyhow::ensure!(
                    report.overall_degree == 1,
                    "witness failed re-verification on {}",
                    constraint.layout.name
                );
            }
        }
    }
    Ok(output::search_json(&outcome, &space))
}

fn solve(args: &SolveArgs, registries: &Registries) -> anyhow::Result<String> {
    let descriptor = registries.instructions.get(&args.instr)?;
    let options = SolverOptions {
        probe_stride_bytes: args.probe_stride_bytes,
        probe_horizon: args.probe_horizon,
    };
    let trace_oracle;
    let builtin_oracle;
    let oracle: &dyn ConflictOracle = if args.oracle == "builtin" {
        builtin_oracle = BuiltinOracle::new(descriptor);
        &builtin_oracle
    } else if let Some(path) = args.oracle.strip_prefix("trace:") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read trace {path}: {e}"))?;
        trace_oracle = TraceOracle::from_csv(&text, path)?;
        &trace_oracle
    } else {
        anyhow::bail!("--oracle must be builtin or trace:<file>");
    };
    let phases = solve_phases(oracle, &options)?;
    let banks = solve_banks(oracle, descriptor.bank_width_bytes, &phases, &options)?;
    Ok(output::phases_json(&args.instr, &phases, banks))
}

fn schedule(args: &ScheduleArgs) -> anyhow::Result<String> {
    let grid = GridConfig::for_problem(args.m, args.n, args.block_m, args.block_n, 1)?;
    let schedule = match args.baseline.as_deref() {
        Some("row-major" | "rowmajor") => build_row_major(&grid, args.nxcd)?,
        Some(other) => anyhow::bail!("unknown baseline `{other}`"),
        None => {
            let params = SwizzleParams::new(args.w, args.c, args.nxcd)?;
            build_schedule(&grid, &params)?
        }
    };
    Ok(schedule.to_csv())
}

fn cache_sim(args: &CacheSimArgs, registries: &Registries) -> anyhow::Result<String> {
    let mut machine = registries.machine(&args.preset)?;
    if let Some(cus) = args.cus_per_xcd {
        machine.cus_per_xcd = cus;
    }
    if let Some(l2) = args.l2_bytes {
        machine.l2_bytes_per_xcd = l2;
    }
    if let Some(llc) = args.llc_bytes {
        machine.llc_bytes = llc;
    }
    let mut cache = CacheConfig::from_machine(&machine);
    cache.line_bytes = args.line_bytes;
    let problem = GemmProblem::new(
        args.m,
        args.n,
        args.k,
        args.block_m,
        args.block_n,
        args.block_k,
        DType::parse(&args.dtype)?,
    )?;

    let results: Vec<(ScheduleKind, cachesim::SimResult)> = if let Some(sweep) = &args.sweep {
        let (ws, cs) = sweep
            .split_once('x')
            .ok_or_else(|| anyhow::anyhow!("--sweep expects W,W,..xC,C,.."))?;
        let parse_list = |s: &str| -> anyhow::Result<Vec<u32>> {
            s.split(',')
                .map(|v| v.trim().parse::<u32>().map_err(Into::into))
                .collect()
        };
        cachesim::sweep(
            &problem,
            &machine,
            &cache,
            &parse_list(ws)?,
            &parse_list(cs)?,
        )?
    } else {
        let kind = parse_schedule_kind(&args.schedule)?;
        vec![(kind, cachesim::run(&problem, kind, &machine, &cache)?)]
    };

    match args.format.as_str() {
        "csv" => Ok(output::cache_csv(&results)),
        "json" => Ok(output::cache_json(&results)),
        other => anyhow::bail!("unknown format `{other}`"),
    }
}

fn parse_schedule_kind(spec: &str) -> anyhow::Result<ScheduleKind> {
    if spec == "rowmajor" || spec == "row-major" {
        return Ok(ScheduleKind::RowMajor);
    }
    if let Some(rest) = spec.strip_prefix("alg1:") {
        let (w, c) = rest
            .split_once(',')
            .ok_or_else(|| anyhow::anyhow!("alg1 schedule needs W,C"))?;
        return Ok(ScheduleKind::Alg1 {
            w: w.trim().parse()?,
            c: c.trim().parse()?,
        });
    }
    anyhow::bail!("--schedule must be rowmajor or alg1:W,C")
}

fn plan(args: &PlanArgs, registries: &Registries) -> anyhow::Result<String> {
    let machine = registries.machine(&args.preset)?;
    let (m, n, k) = MfmaShape::parse_dims(&args.mfma)?;
    let shape = MfmaShape::new(m, n, k, DType::parse(&args.dtype)?);
    let mut plan = WavePlan::new(
        args.producers,
        args.consumers,
        args.out_m,
        args.out_n,
        shape,
    );
    plan.pipeline_depth = args.depth;
    if let Some(overhead) = args.overhead {
        plan.overhead_regs = overhead;
    }
    let report = register_feasibility(&plan, &machine)?;
    let intensity = cdnasim_core::waves::intensity(args.out_m, args.out_n, k, shape.dtype);
    Ok(output::plan_json(&report, intensity))
}

fn pingpong(args: &PingpongArgs) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(&args.clusters)
        .map_err(|e| anyhow::anyhow!("cannot read clusters {}: {e}", args.clusters))?;
    let mut groups: Vec<Vec<Cluster>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("group") || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        anyhow::ensure!(
            fields.len() == 3,
            "clusters line {}: expected group,kind,duration",
            lineno + 1
        );
        let group: usize = fields[0].parse()?;
        let kind = match fields[1] {
            "compute" => ClusterKind::Compute,
            "memory" => ClusterKind::Memory,
            other => anyhow::bail!("clusters line {}: unknown kind `{other}`", lineno + 1),
        };
        let duration: f64 = fields[2].parse()?;
        anyhow::ensure!(duration >= 0.0, "negative duration on line {}", lineno + 1);
        while groups.len() <= group {
            groups.push(Vec::new());
        }
        groups[group].push(Cluster { kind, duration });
    }
    anyhow::ensure!(
        (1..=2).contains(&groups.len()),
        "pingpong expects one or two wavegroups, got {}",
        groups.len()
    );
    let timeline = if groups.len() == 2 {
        PingPongTimeline::two_group(groups[0].clone(), groups[1].clone())?
    } else {
        PingPongTimeline::single_group(groups[0].clone())
    };
    let result = pingpong_utilization(&timeline)?;
    if let Some(path) = &args.trace {
        let mut csv = String::from("group,cluster,kind,start,end\n");
        for event in &result.events {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                event.group,
                event.cluster,
                match event.kind {
                    ClusterKind::Compute => "compute",
                    ClusterKind::Memory => "memory",
                },
                round4(event.start),
                round4(event.end)
            ));
        }
        std::fs::write(path, csv)?;
    }
    Ok(output::pingpong_json(&result))
}
