//! `patsched`: generate, verify and cost collective schedules.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 bad arguments or
//! configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use patsched::costmodel::CSV_HEADER;
use patsched::oracle::{check_schedule, CheckOptions, DEFAULT_SEEDS};
use patsched::sched::valid_trees;
use patsched::simulate::{run_allgather_with, run_reduce_scatter_with, trace_csv, ExecOptions};
use patsched::{
    generate, schedule_cost, translate, trees_from_buffer, Algorithm, CollectiveKind, ExecMode,
    IntPayload, ReduceOp, RelativeSchedule, Topology64,
};

#[derive(Parser)]
#[command(
    name = "patsched",
    version,
    about = "Schedules for all-gather and reduce-scatter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a schedule as JSON, or the tree of one chunk as DOT.
    Schedule(ScheduleArgs),
    /// Check schedules against the oracle.
    Verify(VerifyArgs),
    /// Alpha-beta cost of one or more algorithms, as CSV.
    Cost(CostArgs),
    /// Cost over a grid of rank counts, sizes and tree counts, as CSV.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    Allgather,
    Reducescatter,
}

impl From<Op> for CollectiveKind {
    fn from(op: Op) -> Self {
        match op {
            Op::Allgather => CollectiveKind::AllGather,
            Op::Reducescatter => CollectiveKind::ReduceScatter,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Dot,
}

fn parse_algo(raw: &str) -> Result<Algorithm, String> {
    Algorithm::parse(raw)
        .ok_or_else(|| format!("unknown algorithm {raw:?} (ring, bruck, bruck-ff, rd, pat)"))
}

/// Which schedule: algorithm, collective, size and PAT tree count.
#[derive(Args)]
struct Target {
    #[arg(long, value_parser = parse_algo)]
    algo: Algorithm,
    #[arg(long, value_enum, default_value = "allgather")]
    op: Op,
    #[arg(short = 'n', long = "ranks")]
    n: usize,
    #[command(flatten)]
    trees: TreeArgs,
}

#[derive(Args)]
struct TreeArgs {
    /// PAT tree count (aggregation limit).
    #[arg(long, conflicts_with = "buffer_bytes")]
    trees: Option<usize>,
    /// PAT: derive the tree count from an intermediate buffer size.
    #[arg(long, requires = "chunk_bytes")]
    buffer_bytes: Option<u64>,
    #[arg(long)]
    chunk_bytes: Option<u64>,
}

impl TreeArgs {
    fn resolve(&self, n: usize) -> Result<Option<usize>> {
        match (self.trees, self.buffer_bytes) {
            (Some(t), _) => Ok(Some(t)),
            (None, Some(buffer)) => {
                let chunk = self.chunk_bytes.unwrap_or(1);
                Ok(Some(trees_from_buffer(buffer, chunk, n)?))
            }
            (None, None) => Ok(None),
        }
    }
}

fn pat_trees(algo: Algorithm, trees: Option<usize>) -> Result<Option<usize>> {
    if algo == Algorithm::Pat && trees.is_none() {
        bail!("pat needs --trees or --buffer-bytes with --chunk-bytes");
    }
    Ok(trees)
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Chunk whose tree the DOT output draws.
    #[arg(long, default_value_t = 0)]
    origin: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Verify a schedule JSON file instead of generating one.
    #[arg(long, conflicts_with_all = ["algo", "n", "trees", "buffer_bytes", "all_t"])]
    from_file: Option<PathBuf>,
    #[arg(long, value_parser = parse_algo, required_unless_present = "from_file")]
    algo: Option<Algorithm>,
    #[arg(long, value_enum, default_value = "allgather")]
    op: Op,
    #[arg(short = 'n', long = "ranks", required_unless_present = "from_file")]
    n: Option<usize>,
    #[command(flatten)]
    trees: TreeArgs,
    /// PAT: every valid tree count for n.
    #[arg(long, conflicts_with_all = ["trees", "buffer_bytes"])]
    all_t: bool,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long, default_value_t = 3)]
    elements: usize,
    /// Fail when the measured peak exceeds this many intermediate slots.
    #[arg(long)]
    buffer_slots: Option<usize>,
    /// Write a per-message CSV trace of the first seed's run.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// One thread per rank instead of the lockstep loop.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_algo, required = true)]
    algos: Vec<Algorithm>,
    #[arg(short = 'n', long = "ranks")]
    n: usize,
    #[arg(long, conflicts_with = "buffer_bytes")]
    trees: Option<usize>,
    /// PAT: tree count from a buffer of this size, with chunks of --bytes-per-rank.
    #[arg(long)]
    buffer_bytes: Option<u64>,
    #[arg(long, default_value_t = 1)]
    bytes_per_rank: u64,
    /// Topology JSON; defaults to one level with alpha 1 us and beta 0.
    #[arg(long)]
    topo: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_algo)]
    algos: Vec<Algorithm>,
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    bytes_list: Vec<u64>,
    /// PAT tree counts; every valid T when omitted. Counts invalid for a
    /// given n are skipped.
    #[arg(long, value_delimiter = ',')]
    trees_list: Vec<usize>,
    #[arg(long)]
    topo: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Schedule(args) => cmd_schedule(&args).map(|_| true),
        Command::Verify(args) => cmd_verify(&args),
        Command::Cost(args) => cmd_cost(&args).map(|_| true),
        Command::Sweep(args) => cmd_sweep(&args).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_schedule(args: &ScheduleArgs) -> Result<()> {
    let t = &args.target;
    let trees = pat_trees(t.algo, t.trees.resolve(t.n)?)?;
    let sched = generate(t.algo, t.op.into(), t.n, trees)?;
    let text = match args.format {
        Format::Json => sched.to_json() + "\n",
        Format::Dot => render_dot(&sched, args.origin)?,
    };
    emit(args.out.as_deref(), &text)
}

/// Broadcast tree of chunk `origin` (all-gather) or reduction tree into
/// rank `origin` (reduce-scatter): one edge per message that carries it.
fn render_dot(sched: &RelativeSchedule, origin: usize) -> Result<String> {
    let n = sched.n_ranks;
    if origin >= n {
        bail!("--origin {origin} out of range for {n} ranks");
    }
    let title = match sched.params {
        Some(p) => format!("{} {} n={} T={}", sched.algorithm, sched.kind, n, p.trees),
        None => format!("{} {} n={}", sched.algorithm, sched.kind, n),
    };
    let mut out = String::new();
    writeln!(out, "digraph \"{title} chunk {origin}\" {{")?;
    writeln!(out, "  node [shape=circle];")?;
    writeln!(out, "  {origin} [style=bold];")?;
    let mut edges = Vec::new();
    for rank in 0..n {
        for step in translate(sched, rank)? {
            if step.chunk_ids.contains(&origin) {
                edges.push((step.round_index, step.sender_rank, step.receiver_rank));
            }
        }
    }
    edges.sort_unstable();
    for (round, from, to) in edges {
        let dim = sched.rounds[round].dimension;
        writeln!(out, "  {from} -> {to} [label=\"r{round} d{dim}\"];")?;
    }
    out.push_str("}\n");
    Ok(out)
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let schedules = verify_targets(args)?;
    if args.trace.is_some() && schedules.len() != 1 {
        bail!("--trace needs a single schedule, got {}", schedules.len());
    }
    let opts = CheckOptions {
        seeds: if args.seed.is_empty() {
            DEFAULT_SEEDS.to_vec()
        } else {
            args.seed.clone()
        },
        elements_per_chunk: args.elements,
        mode: exec_mode(args.parallel),
        slot_budget: args.buffer_slots,
    };
    if opts.elements_per_chunk == 0 {
        bail!("--elements must be at least 1");
    }
    let mut passed = 0;
    for sched in &schedules {
        let report = check_schedule(sched, &opts);
        for line in report.detail_lines() {
            println!("{line}");
        }
        if report.passed() {
            passed += 1;
        }
    }
    println!("{passed}/{} schedules verified", schedules.len());
    if let (Some(path), [sched]) = (&args.trace, schedules.as_slice()) {
        if passed == 1 {
            write_trace(sched, &opts, path)?;
        }
    }
    Ok(passed == schedules.len())
}

fn exec_mode(parallel: bool) -> ExecMode {
    if parallel {
        ExecMode::Parallel
    } else {
        ExecMode::Lockstep
    }
}

fn verify_targets(args: &VerifyArgs) -> Result<Vec<RelativeSchedule>> {
    if let Some(path) = &args.from_file {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(vec![RelativeSchedule::from_json(&text)?]);
    }
    let (Some(algo), Some(n)) = (args.algo, args.n) else {
        bail!("--algo and -n are required without --from-file");
    };
    let kind = args.op.into();
    if args.all_t {
        if algo != Algorithm::Pat {
            bail!("--all-t only applies to pat");
        }
        return valid_trees(n)
            .into_iter()
            .map(|t| Ok(generate(algo, kind, n, Some(t))?))
            .collect();
    }
    let trees = pat_trees(algo, args.trees.resolve(n)?)?;
    Ok(vec![generate(algo, kind, n, trees)?])
}

fn write_trace(sched: &RelativeSchedule, opts: &CheckOptions, path: &Path) -> Result<()> {
    let seed = opts.seeds.first().copied().unwrap_or(0);
    let n = sched.n_ranks;
    let exec = ExecOptions {
        mode: opts.mode,
        hierarchy: None,
    };
    let trace = match sched.kind {
        CollectiveKind::AllGather => {
            let payload = IntPayload::random_gather(n, opts.elements_per_chunk, seed);
            run_allgather_with(sched, &payload, &exec)?.trace
        }
        CollectiveKind::ReduceScatter => {
            let payload = IntPayload::random_scatter(n, opts.elements_per_chunk, seed);
            run_reduce_scatter_with(sched, &payload, ReduceOp::WrappingIntSum, &exec)?.trace
        }
    };
    fs::write(path, trace_csv(&trace)).with_context(|| format!("writing {}", path.display()))
}

fn load_topology(path: Option<&Path>, n: usize) -> Result<Topology64> {
    match path {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Topology64::from_json(&text).with_context(|| format!("topology {}", path.display()))
        }
        None => Ok(Topology64::uniform(n, 1.0, 0.0)),
    }
}

fn cost_row(
    algo: Algorithm,
    n: usize,
    trees: Option<usize>,
    bytes: u64,
    topo: &Topology64,
) -> Result<String> {
    let trees = if algo == Algorithm::Pat { trees } else { None };
    let sched = generate(algo, CollectiveKind::AllGather, n, trees)?;
    Ok(schedule_cost(&sched, topo, bytes)?.csv_row())
}

fn cmd_cost(args: &CostArgs) -> Result<()> {
    let topo = load_topology(args.topo.as_deref(), args.n)?;
    let trees = match (args.trees, args.buffer_bytes) {
        (Some(t), _) => Some(t),
        (None, Some(buffer)) => Some(trees_from_buffer(buffer, args.bytes_per_rank, args.n)?),
        (None, None) => None,
    };
    let mut text = format!("{CSV_HEADER}\n");
    for &algo in &args.algos {
        let row = cost_row(
            algo,
            args.n,
            pat_trees(algo, trees)?,
            args.bytes_per_rank,
            &topo,
        )
        .with_context(|| format!("{algo} n={}", args.n))?;
        text.push_str(&row);
        text.push('\n');
    }
    emit(args.out.as_deref(), &text)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let algos: Vec<Algorithm> = if args.algos.is_empty() {
        Algorithm::ALL.to_vec()
    } else {
        args.algos.clone()
    };
    let mut text = format!("{CSV_HEADER}\n");
    for &n in &args.n_list {
        if n == 0 {
            return Err(anyhow!("rank counts must be at least 1"));
        }
        let topo = load_topology(args.topo.as_deref(), n)?;
        let valid = valid_trees(n);
        let trees: Vec<usize> = if args.trees_list.is_empty() {
            valid
        } else {
            args.trees_list
                .iter()
                .copied()
                .filter(|t| valid.contains(t))
                .collect()
        };
        for &bytes in &args.bytes_list {
            for &algo in &algos {
                let tree_options: Vec<Option<usize>> = match algo {
                    Algorithm::Pat => trees.iter().map(|&t| Some(t)).collect(),
                    Algorithm::RecursiveDoubling if !n.is_power_of_two() => Vec::new(),
                    _ => vec![None],
                };
                for t in tree_options {
                    let row = cost_row(algo, n, t, bytes, &topo)
                        .with_context(|| format!("{algo} n={n}"))?;
                    text.push_str(&row);
                    text.push('\n');
                }
            }
        }
    }
    emit(args.out.as_deref(), &text)
}
