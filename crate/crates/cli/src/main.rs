//! `dmo` — plan, analyze, trace, render and validate tensor-arena layouts.
//!
//! Exit codes: 0 success, 1 the validated plan clobbers live values,
//! 2 invalid input (missing files, malformed JSON, bad graphs or flags),
//! 3 internal inconsistency between the overlap methods.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dmo_core::{
    analyze_graph, demo_graph, dump_trace_binary, dump_trace_csv, load_graph, plan_baseline,
    plan_dmo, render_blocks, render_trace, save_graph, validate, zoo_build, zoo_list,
    AllocationPlan, DemoKind, OsMethod, PlanOptions, RenderOptions, SeedDirection, Strategy,
    TensorGraph, ZooSpec,
};

#[derive(Parser)]
#[command(
    name = "dmo",
    version,
    about = "Static memory planner with safe input/output buffer overlap",
    after_help = "Exit codes:\n  \
        0  success\n  \
        1  validate found clobbered values\n  \
        2  invalid input (file, JSON, graph, or flag)\n  \
        3  overlap methods disagree (internal inconsistency)"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan arena layouts (baseline and overlap-optimised) for a graph
    Plan(PlanCmd),
    /// Cross-check the three overlap computations on every op
    Analyze(AnalyzeCmd),
    /// Dump one op's memory-access trace as CSV or fixed-size binary records
    Trace(TraceCmd),
    /// Render an op's access envelope or a plan's arena layout as SVG
    Render(RenderCmd),
    /// Replay a graph against a plan and report clobbered values
    Validate(ValidateCmd),
    /// List or export the built-in model zoo
    Zoo {
        #[command(subcommand)]
        cmd: ZooCmd,
    },
}

/// Where the graph comes from: a JSON file, a zoo spec, or a bundled demo.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct InputArgs {
    /// Graph JSON file
    #[arg(long, value_name = "PATH")]
    graph: Option<PathBuf>,
    /// Built-in zoo model, e.g. v1-0.25-128-u8
    #[arg(long, value_name = "SPEC")]
    zoo: Option<String>,
    /// Built-in single-op demo: relu, matmul, depthwise, conv2d
    #[arg(long, value_name = "KIND")]
    demo: Option<String>,
}

impl InputArgs {
    fn load(&self) -> Result<TensorGraph> {
        if let Some(path) = &self.graph {
            return load_graph(path).with_context(|| format!("loading {}", path.display()));
        }
        if let Some(spec) = &self.zoo {
            return Ok(zoo_build(&ZooSpec::parse(spec)?)?);
        }
        if let Some(demo) = &self.demo {
            return Ok(demo_graph(DemoKind::from_str(demo)?));
        }
        unreachable!("clap enforces exactly one input source");
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum StrategyArg {
    All,
    Eager,
    Lazy,
    #[value(name = "file-order", alias = "file_order")]
    FileOrder,
}

impl StrategyArg {
    fn to_strategies(self) -> Vec<Strategy> {
        match self {
            StrategyArg::All => vec![Strategy::Eager, Strategy::Lazy, Strategy::FileOrder],
            StrategyArg::Eager => vec![Strategy::Eager],
            StrategyArg::Lazy => vec![Strategy::Lazy],
            StrategyArg::FileOrder => vec![Strategy::FileOrder],
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum OsMethodArg {
    Trace,
    Algorithmic,
    Analytic,
}

impl From<OsMethodArg> for OsMethod {
    fn from(m: OsMethodArg) -> Self {
        match m {
            OsMethodArg::Trace => OsMethod::Trace,
            OsMethodArg::Algorithmic => OsMethod::Algorithmic,
            OsMethodArg::Analytic => OsMethod::Analytic,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum SeedArg {
    Forward,
    Backward,
    Both,
}

impl SeedArg {
    fn to_seeds(self) -> Vec<SeedDirection> {
        match self {
            SeedArg::Forward => vec![SeedDirection::Forward],
            SeedArg::Backward => vec![SeedDirection::Backward],
            SeedArg::Both => vec![SeedDirection::Forward, SeedDirection::Backward],
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct PlanCmd {
    #[command(flatten)]
    input: InputArgs,
    /// Execution-order strategy to plan with
    #[arg(long, value_enum, default_value = "all")]
    strategy: StrategyArg,
    /// Overlap computation the optimiser trusts
    #[arg(long, value_enum, default_value = "analytic")]
    os_method: OsMethodArg,
    /// Baseline allocator seed direction
    #[arg(long, value_enum, default_value = "both")]
    seed_direction: SeedArg,
    /// Write the optimised plan JSON here
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct AnalyzeCmd {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct TraceCmd {
    #[command(flatten)]
    input: InputArgs,
    /// Index of the op to trace
    #[arg(long, default_value_t = 0)]
    op: usize,
    /// Emit fixed 18-byte binary records instead of CSV
    #[arg(long)]
    binary: bool,
    /// Output file (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderCmd {
    #[command(flatten)]
    input: InputArgs,
    /// Index of the op whose envelope to render
    #[arg(long, default_value_t = 0)]
    op: usize,
    /// Render this plan's arena layout instead of an access envelope
    #[arg(long, value_name = "PATH")]
    plan: Option<PathBuf>,
    /// Output file (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateCmd {
    #[command(flatten)]
    input: InputArgs,
    /// Plan JSON to replay against the graph
    #[arg(long, value_name = "PATH")]
    plan: PathBuf,
}

#[derive(Subcommand)]
enum ZooCmd {
    /// Print the canonical spec of every bundled model
    List,
    /// Build a zoo model and write its graph JSON
    Export {
        /// Model spec, e.g. v2-0.35-224-f32
        spec: String,
        /// Output file (stdout when omitted)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn write_out(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

const KIB: f64 = 1024.0;

fn run_plan(cmd: &PlanCmd) -> Result<u8> {
    let g = cmd.input.load()?;
    let opts = PlanOptions {
        strategies: cmd.strategy.to_strategies(),
        seeds: cmd.seed_direction.to_seeds(),
        os_method: cmd.os_method.into(),
        include_baseline_candidate: true,
    };
    let base = plan_baseline(&g, &opts)?;
    let dmo = plan_dmo(&g, &opts)?;
    let saving_pct = if base.arena_size == 0 {
        0.0
    } else {
        100.0 * (base.arena_size as f64 - dmo.arena_size as f64) / base.arena_size as f64
    };

    match cmd.format {
        Format::Text => {
            println!("model     {}", g.name);
            println!(
                "baseline  {:.1} KiB ({} B)  [{}]",
                base.arena_size as f64 / KIB,
                base.arena_size,
                base.strategy
            );
            println!(
                "optimised {:.1} KiB ({} B)  [{}]",
                dmo.arena_size as f64 / KIB,
                dmo.arena_size,
                dmo.strategy
            );
            println!(
                "saving    {saving_pct:.1}% ({} B)",
                base.arena_size - dmo.arena_size
            );
        }
        Format::Json => {
            let doc = serde_json::json!({
                "model": g.name,
                "baseline": serde_json::to_value(&base)?,
                "optimised": serde_json::to_value(&dmo)?,
                "saving_pct": saving_pct,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    if let Some(path) = &cmd.out {
        dmo.save(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn run_analyze(cmd: &AnalyzeCmd) -> Result<u8> {
    let g = cmd.input.load()?;
    let report = analyze_graph(&g)?;
    match cmd.format {
        Format::Text => {
            println!("model {}", report.model);
            println!(
                "{:<16} {:>12} {:>12} {:>12} {:>10} {:>8}  consistent",
                "op", "trace", "algorithmic", "analytic", "gap", "gap%"
            );
            let col = |v: Option<u64>| match v {
                Some(n) => n.to_string(),
                None => "-".to_string(),
            };
            for op in &report.ops {
                println!(
                    "{:<16} {:>12} {:>12} {:>12} {:>10} {:>8.2}  {}",
                    op.op,
                    col(op.trace),
                    col(op.algorithmic),
                    op.analytic,
                    op.gap_bytes,
                    op.gap_pct,
                    if op.consistent { "yes" } else { "NO" }
                );
            }
        }
        Format::Json => println!("{}", report.to_json_string()),
    }
    if !report.consistent {
        eprintln!("error: overlap methods disagree on at least one op");
        return Ok(3);
    }
    Ok(0)
}

fn run_trace(cmd: &TraceCmd) -> Result<u8> {
    let g = cmd.input.load()?;
    if cmd.op >= g.ops.len() {
        bail!("op index {} out of range ({} ops)", cmd.op, g.ops.len());
    }
    let mut buf: Vec<u8> = Vec::new();
    if cmd.binary {
        dump_trace_binary(&g, cmd.op, &mut buf)?;
    } else {
        dump_trace_csv(&g, cmd.op, &mut buf)?;
    }
    match &cmd.out {
        Some(path) => {
            fs::write(path, &buf).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(0)
}

fn run_render(cmd: &RenderCmd) -> Result<u8> {
    let g = cmd.input.load()?;
    let svg = match &cmd.plan {
        Some(path) => {
            let plan =
                AllocationPlan::load(path).with_context(|| format!("loading {}", path.display()))?;
            render_blocks(&g, &plan)?
        }
        None => {
            if cmd.op >= g.ops.len() {
                bail!("op index {} out of range ({} ops)", cmd.op, g.ops.len());
            }
            render_trace(&g, cmd.op, &RenderOptions::default())?
        }
    };
    write_out(cmd.out.as_ref(), &svg)?;
    Ok(0)
}

fn run_validate(cmd: &ValidateCmd) -> Result<u8> {
    let g = cmd.input.load()?;
    let plan = AllocationPlan::load(&cmd.plan)
        .with_context(|| format!("loading {}", cmd.plan.display()))?;
    let records = validate(&g, &plan)
        .with_context(|| format!("replaying plan `{}` against `{}`", plan.strategy, g.name))?;
    println!(
        "{} clobbers replaying `{}` against plan `{}`",
        records.len(),
        g.name,
        plan.strategy
    );
    if records.is_empty() {
        return Ok(0);
    }
    for r in &records {
        println!(
            "clobber: step {} op `{}` overwrote byte {} of `{}` (read pending at step {})",
            r.step, r.writer_op, r.address, r.victim, r.pending_read_step
        );
    }
    Ok(1)
}

fn run_zoo(cmd: &ZooCmd) -> Result<u8> {
    match cmd {
        ZooCmd::List => {
            for spec in zoo_list() {
                println!("{spec}");
            }
        }
        ZooCmd::Export { spec, out } => {
            let g = zoo_build(&ZooSpec::parse(spec)?)?;
            match out {
                Some(path) => {
                    save_graph(&g, path)
                        .with_context(|| format!("writing {}", path.display()))?;
                }
                None => println!("{}", dmo_core::graph_to_json(&g)),
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    // Die quietly when the consumer closes stdout early (`dmo validate … |
    // head`) instead of panicking mid-report; Rust ignores SIGPIPE by default.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Plan(c) => run_plan(c),
        Cmd::Analyze(c) => run_analyze(c),
        Cmd::Trace(c) => run_trace(c),
        Cmd::Render(c) => run_render(c),
        Cmd::Validate(c) => run_validate(c),
        Cmd::Zoo { cmd } => run_zoo(cmd),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
