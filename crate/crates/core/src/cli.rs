//! Command-line front end: build a block, rewrite it, cost it, check it.
//!
//! Every command is deterministic given its flags, `--seed` and the
//! calibration file. Exit codes: 0 success, 1 other failure, 2 usage error,
//! 3 verification failure, 4 numeric error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Result, XambaError};
use crate::graph::{census, OpGraph, OpKind};
use crate::models::{default_block, Mode, Variant};
use crate::npusim::{cost_graph, speedup, tokens_per_second, CostConfig, LatencyReport};
use crate::passes::{
    apply_passes, check_equivalence, default_tables, tables_with_segments, EquivalenceConfig, EquivalenceReport,
    InputDist, DEFAULT_RANGE, DEFAULT_SEGMENTS, PASS_NAMES,
};
use crate::plu::{self, PluFunc};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Grid size used when measuring table error.
pub const ERROR_GRID: usize = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "xamba", version, about = "Mamba NPU rewrites and cost model")]
pub struct Cli {
    /// Print machine-readable JSON instead of a summary.
    #[arg(long, global = true)]
    pub json: bool,
    /// Seed for weights and random inputs.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Cost model calibration file (defaults to $XAMBA_CALIBRATION, then the shipped one).
    #[arg(long, global = true)]
    pub calibration: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cost one block, optionally rewritten, and compare it with the baseline.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Write the latency report JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one CSV row per node here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check that the rewritten block computes the same outputs as the baseline.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 1e-4)]
        atol: f32,
        #[arg(long, default_value_t = 1e-5)]
        rtol: f32,
        /// Segments per activation table used by ActiBA.
        #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
        segments: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep both models over the standard pass sets and emit CSV.
    Bench {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the rewritten graph as JSON.
    Rewrite {
        #[command(flatten)]
        run: RunArgs,
        /// Rewrite this graph file instead of a built block.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a uniform piecewise-linear table and write it as a C-LUT file.
    FitPlu {
        #[arg(long)]
        func: PluFunc,
        #[arg(long, default_value_t = 1.0)]
        beta: f32,
        #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
        segments: usize,
        #[arg(long, default_value_t = DEFAULT_RANGE.0, allow_hyphen_values = true)]
        lo: f32,
        #[arg(long, default_value_t = DEFAULT_RANGE.1, allow_hyphen_values = true)]
        hi: f32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Worst-case error of a C-LUT file, or of a freshly fitted table.
    PluError {
        #[arg(long, conflicts_with = "func")]
        table: Option<PathBuf>,
        #[arg(long)]
        func: Option<PluFunc>,
        #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
        segments: usize,
        #[arg(long, default_value_t = ERROR_GRID)]
        grid: usize,
    },
    /// Operator counts of a block next to the expected counts.
    Census {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value = "mamba2")]
    pub model: Variant,
    #[arg(long, default_value = "prefill")]
    pub mode: Mode,
    /// Comma-separated passes; `all` means cumba,reduba,actiba.
    #[arg(long, default_value = "")]
    pub passes: String,
}

impl RunArgs {
    pub fn pass_list(&self) -> Result<Vec<String>> {
        parse_passes(&self.passes)
    }
}

/// Splits a pass list, expanding `all` and rejecting unknown names.
pub fn parse_passes(s: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for p in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if p == "all" {
            out.extend(["cumba", "reduba", "actiba"].map(String::from));
        } else if PASS_NAMES.contains(&p) {
            out.push(p.to_string());
        } else {
            return Err(XambaError::Config(format!(
                "unknown pass {p:?}; expected one of {} or all",
                PASS_NAMES.join(", ")
            )));
        }
    }
    Ok(out)
}

fn model_name(v: Variant) -> &'static str {
    match v {
        Variant::Mamba => "mamba",
        Variant::Mamba2 => "mamba2",
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Prefill => "prefill",
        Mode::Decode => "decode",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Simulation {
    pub model: Variant,
    pub mode: Mode,
    pub passes: Vec<String>,
    pub total_us: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speedup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_tokens_per_s: Option<f64>,
    pub report: LatencyReport,
}

/// Builds, rewrites and costs one block.
pub fn cmd_simulate(run: &RunArgs, seed: u64, cfg: &CostConfig) -> Result<Simulation> {
    let passes = run.pass_list()?;
    let base = default_block(run.model, run.mode, seed)?;
    let opt = apply_passes(&base, &passes, &default_tables())?;
    let base_report = cost_graph(&base, cfg)?;
    let report = cost_graph(&opt, cfg)?;
    let speedup = if passes.is_empty() {
        None
    } else {
        Some(speedup(&base_report, &report)?)
    };
    let (tokens_per_s, baseline_tokens_per_s) = if run.mode == Mode::Decode {
        (
            Some(tokens_per_second(&report, 1)?),
            Some(tokens_per_second(&base_report, 1)?),
        )
    } else {
        (None, None)
    };
    Ok(Simulation {
        model: run.model,
        mode: run.mode,
        passes,
        total_us: report.total_us,
        speedup,
        tokens_per_s,
        baseline_tokens_per_s,
        report,
    })
}

/// Runs baseline and rewritten blocks on seeded random inputs.
pub fn cmd_verify(
    run: &RunArgs,
    seed: u64,
    samples: usize,
    atol: f32,
    rtol: f32,
    segments: usize,
) -> Result<EquivalenceReport> {
    let passes = run.pass_list()?;
    let base = default_block(run.model, run.mode, seed)?;
    let opt = apply_passes(&base, &passes, &tables_with_segments(segments)?)?;
    let cfg = EquivalenceConfig {
        samples,
        dist: InputDist::Uniform { lo: -1.0, hi: 1.0 },
        rtol,
        atol,
        seed,
    };
    check_equivalence(&base, &opt, &cfg)
}

/// Pass sets swept by [`cmd_bench`].
pub const BENCH_PASS_SETS: [(&str, &[&str]); 5] = [
    ("none", &[]),
    ("cumba", &["cumba"]),
    ("reduba", &["reduba"]),
    ("cumba+reduba", &["cumba", "reduba"]),
    ("all", &["cumba", "reduba", "actiba"]),
];

/// Prefill sweep of both models over [`BENCH_PASS_SETS`]: one row per
/// (model, pass set) with total time, speedup and per-kind shares.
pub fn cmd_bench(seed: u64, cfg: &CostConfig) -> Result<String> {
    let tables = default_tables();
    let mut rows = Vec::new();
    for model in [Variant::Mamba, Variant::Mamba2] {
        let base = default_block(model, Mode::Prefill, seed)?;
        let base_report = cost_graph(&base, cfg)?;
        for (name, passes) in BENCH_PASS_SETS {
            let report = cost_graph(&apply_passes(&base, passes, &tables)?, cfg)?;
            let s = speedup(&base_report, &report)?;
            rows.push((model, name, report, s));
        }
    }
    let mut kinds: Vec<&String> = rows.iter().flat_map(|r| r.2.breakdown.keys()).collect();
    kinds.sort();
    kinds.dedup();
    let mut csv = String::from("model,passes,total_us,speedup");
    for k in &kinds {
        let _ = write!(csv, ",share_{k}");
    }
    csv.push('\n');
    for (model, name, report, s) in &rows {
        let _ = write!(csv, "{},{},{},{}", model_name(*model), name, report.total_us, s);
        for k in &kinds {
            let _ = write!(csv, ",{}", report.share(k));
        }
        csv.push('\n');
    }
    Ok(csv)
}

/// Expected prefill operator counts of the default blocks.
pub fn census_targets(model: Variant) -> BTreeMap<&'static str, usize> {
    match model {
        Variant::Mamba => [("Gather", 18), ("MatMul", 8), ("Add", 11)].into(),
        Variant::Mamba2 => [("Gather", 7), ("MatMul", 2), ("Add", 10), ("CumSum", 3)].into(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusReport {
    pub model: Variant,
    pub mode: Mode,
    pub passes: Vec<String>,
    pub counts: BTreeMap<String, usize>,
    pub cumsum_shapes: Vec<Vec<usize>>,
    /// Present for the unrewritten prefill block, where counts are contracted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<BTreeMap<String, usize>>,
}

impl CensusReport {
    pub fn matches_targets(&self) -> bool {
        self.targets
            .as_ref()
            .is_none_or(|t| t.iter().all(|(k, &v)| self.counts.get(k).copied().unwrap_or(0) == v))
    }
}

pub fn cmd_census(run: &RunArgs, seed: u64) -> Result<CensusReport> {
    let passes = run.pass_list()?;
    let g = apply_passes(&default_block(run.model, run.mode, seed)?, &passes, &default_tables())?;
    let shapes = g.shapes()?;
    let cumsum_shapes = g
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, OpKind::CumSum { .. }))
        .map(|n| shapes[n.inputs[0]].clone())
        .collect();
    let targets = (passes.is_empty() && run.mode == Mode::Prefill).then(|| {
        census_targets(run.model)
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    });
    Ok(CensusReport {
        model: run.model,
        mode: run.mode,
        passes,
        counts: census(&g),
        cumsum_shapes,
        targets,
    })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(XambaError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit status for a library error.
pub fn exit_code(e: &XambaError) -> i32 {
    match e {
        XambaError::Numeric { .. } => EXIT_NUMERIC,
        XambaError::Config(_) | XambaError::Param(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let load = || CostConfig::load(cli.calibration.as_deref());
    match &cli.command {
        Command::Simulate { run, out: path, csv } => {
            let sim = cmd_simulate(run, cli.seed, &load()?)?;
            if let Some(p) = path {
                write_file(p, sim.report.to_json().as_bytes())?;
            }
            if let Some(p) = csv {
                write_file(p, sim.report.to_csv().as_bytes())?;
            }
            if cli.json {
                writeln!(out, "{}", json(&sim))?;
            } else {
                let passes = if sim.passes.is_empty() {
                    "none".to_string()
                } else {
                    sim.passes.join(",")
                };
                write!(
                    out,
                    "{} {} passes={passes} total_us={:.4}",
                    model_name(sim.model),
                    mode_name(sim.mode),
                    sim.total_us
                )?;
                if let Some(s) = sim.speedup {
                    write!(out, " speedup={s:.3}x")?;
                }
                if let (Some(t), Some(b)) = (sim.tokens_per_s, sim.baseline_tokens_per_s) {
                    write!(out, " tokens/s={t:.1} (baseline {b:.1})")?;
                }
                writeln!(out)?;
                for (label, share) in sim.report.ranked().iter().take(6) {
                    writeln!(out, "  {label:<20} {:>6.2}%", 100.0 * share)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Verify {
            run,
            samples,
            atol,
            rtol,
            segments,
            out: path,
        } => {
            let report = cmd_verify(run, cli.seed, *samples, *atol, *rtol, *segments)?;
            if let Some(p) = path {
                write_file(p, json(&report).as_bytes())?;
            }
            if cli.json {
                writeln!(out, "{}", json(&report))?;
            } else {
                writeln!(
                    out,
                    "{} max_abs_diff={:e} over {} samples (atol {atol:e})",
                    if report.passed { "PASS" } else { "FAIL" },
                    report.max_abs_diff,
                    report.samples
                )?;
            }
            Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Bench { out: path } => {
            let csv = cmd_bench(cli.seed, &load()?)?;
            match path {
                Some(p) => write_file(p, csv.as_bytes())?,
                None => out.write_all(csv.as_bytes())?,
            }
            Ok(EXIT_OK)
        }
        Command::Rewrite { run, graph, out: path } => {
            let base = match graph {
                Some(p) => OpGraph::from_json(&std::fs::read_to_string(p)?)?,
                None => default_block(run.model, run.mode, cli.seed)?,
            };
            let g = apply_passes(&base, &run.pass_list()?, &default_tables())?;
            let text = g.to_json()?;
            match path {
                Some(p) => write_file(p, text.as_bytes())?,
                None => writeln!(out, "{text}")?,
            }
            Ok(EXIT_OK)
        }
        Command::FitPlu {
            func,
            beta,
            segments,
            lo,
            hi,
            out: path,
        } => {
            let table = plu::fit_uniform(*func, *beta, *lo, *hi, *segments)?;
            let (e, at) = plu::max_error(&table, ERROR_GRID);
            if let Some(p) = path {
                write_file(p, &plu::serialize(&table))?;
            }
            if cli.json {
                writeln!(out, "{}", json(&table))?;
            } else {
                writeln!(
                    out,
                    "{} S={segments} on [{lo}, {hi}] beta={beta}: max error {e:.3e} at x={at:.4}",
                    func.name()
                )?;
            }
            Ok(EXIT_OK)
        }
        Command::PluError {
            table,
            func,
            segments,
            grid,
        } => {
            let t = match (table, func) {
                (Some(p), _) => plu::deserialize(&std::fs::read(p)?)?,
                (None, Some(f)) => plu::fit_uniform(*f, 1.0, DEFAULT_RANGE.0, DEFAULT_RANGE.1, *segments)?,
                (None, None) => return Err(XambaError::Config("give --table or --func".into())),
            };
            let (e, at) = plu::max_error(&t, *grid);
            if cli.json {
                writeln!(
                    out,
                    "{}",
                    json(&serde_json::json!({
                        "func": t.func,
                        "segments": t.segments(),
                        "max_error": e,
                        "at": at,
                        "grid": grid,
                    }))
                )?;
            } else {
                writeln!(
                    out,
                    "{} S={}: max error {e:.6e} at x={at:.4} ({grid} points)",
                    t.func.name(),
                    t.segments()
                )?;
            }
            Ok(EXIT_OK)
        }
        Command::Census { run } => {
            let c = cmd_census(run, cli.seed)?;
            if cli.json {
                writeln!(out, "{}", json(&c))?;
            } else {
                writeln!(out, "{:<16} {:>6} {:>8}", "op", "count", "expected")?;
                for (k, v) in &c.counts {
                    let want = c
                        .targets
                        .as_ref()
                        .and_then(|t| t.get(k))
                        .map_or("-".to_string(), |w| w.to_string());
                    writeln!(out, "{k:<16} {v:>6} {want:>8}")?;
                }
                if let Some(t) = &c.targets {
                    for (k, w) in t.iter().filter(|(k, _)| !c.counts.contains_key(*k)) {
                        writeln!(out, "{k:<16} {:>6} {w:>8}", 0)?;
                    }
                }
                if !c.cumsum_shapes.is_empty() {
                    writeln!(out, "CumSum shapes: {:?}", c.cumsum_shapes)?;
                }
            }
            Ok(if c.matches_targets() { EXIT_OK } else { EXIT_VERIFY })
        }
    }
}
