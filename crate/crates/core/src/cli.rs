//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error or failed self-check, 2 configuration
//! error, 3 infeasible policy (stochastic policy outside its region).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::bounds::BoundReport;
use crate::config::{load_config, FileConfig};
use crate::knapsack::{solve_dp, KnapsackItem, KnapsackSolution, Solver};
use crate::model::{current_khat, SystemConfig};
use crate::policies::{build_policy, PolicyKind};
use crate::region::{ArrivalMatrix, RegionVerdict};
use crate::simulator::{empty_report_row, run, stream_rng, write_trace, RngStream, RunConfig, REPORT_HEADER};
use crate::{validate, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mec-sched", version, about = "Freshness-vs-delay slot scheduling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and print its report row.
    Simulate(SimulateArgs),
    /// Run a grid of simulations over load or V.
    Sweep(SweepArgs),
    /// Membership of the configured lambda in the outer and inner regions.
    Region(RegionArgs),
    /// Theoretical AoI and delay bounds over a V grid.
    Bounds(BoundsArgs),
    /// Solver, decision and update-law self-checks.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the `policy` key of the config file.
    #[arg(long)]
    pub policy: Option<PolicyKind>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub frames: u64,
    /// Defaults to 10% of the frames.
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long = "V")]
    pub tradeoff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Report CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the per-frame trace CSV here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVariable {
    /// Rescale a sampled lambda so `sum k lambda` hits each grid value.
    Load,
    /// Vary the tradeoff weight V with the configured lambda.
    #[value(name = "V", alias = "v")]
    Tradeoff,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated policies; defaults to the config file's policy.
    #[arg(long, value_delimiter = ',')]
    pub policy: Vec<PolicyKind>,
    #[arg(long, value_enum, default_value = "load")]
    pub variable: SweepVariable,
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<f64>,
    /// Runs per grid point, seeded `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Master seed; also drives the lambda draw of load sweeps.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub frames: u64,
    #[arg(long)]
    pub warmup: Option<u64>,
    /// Fixed V for load sweeps; overrides the config file.
    #[arg(long = "V")]
    pub tradeoff: Option<f64>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated V values; defaults to the config file's V.
    #[arg(long = "V", value_delimiter = ',')]
    pub tradeoff: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Corrupt the packing solver to prove the checks can fail.
    #[arg(long, hide = true)]
    pub inject_dp_fault: bool,
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Parameter(_) => 2,
        Error::Infeasible(_) => 3,
        _ => 1,
    }
}

/// Parse the process arguments, run, and return the exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(args) => simulate(&args).map(|_| 0),
        Command::Sweep(args) => sweep(&args).map(|_| 0),
        Command::Region(args) => region(&args).map(|_| 0),
        Command::Bounds(args) => bounds(&args).map(|_| 0),
        Command::Validate(args) => Ok(self_check(&args)),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_config(frames: u64, warmup: Option<u64>, seed: u64) -> Result<RunConfig> {
    let mut rc = RunConfig::new(frames, seed);
    if let Some(w) = warmup {
        rc.warmup = w;
    }
    rc.validate()?;
    Ok(rc)
}

fn pick_policy(cli: Option<PolicyKind>, file: &FileConfig) -> PolicyKind {
    cli.or(file.policy).unwrap_or(PolicyKind::Dpp)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut file = load_config(&args.run.config)?;
    if let Some(v) = args.run.tradeoff {
        file.system.tradeoff = v;
        file.system.validate()?;
    }
    let kind = pick_policy(args.run.policy, &file);
    let mut rc = run_config(args.run.frames, args.run.warmup, args.run.seed)?;
    rc.trace = args.trace.is_some();

    let mut policy = match build_policy(kind, &file.system, file.window_thresholds.as_deref()) {
        Err(e @ Error::Infeasible(_)) => {
            let khat = current_khat(&file.system)?;
            let verdict = RegionVerdict::evaluate(&file.system.arrivals, file.system.slots, khat);
            eprintln!("{}", RegionVerdict::CSV_HEADER);
            eprintln!("{}", verdict.csv_row());
            return Err(e);
        }
        other => other?,
    };
    let out = run(&file.system, &rc, &mut policy)?;
    let mut w = output(args.out.as_deref())?;
    w.write_all(out.report.to_csv().as_bytes())?;
    w.flush()?;
    if let (Some(path), Some(rows)) = (&args.trace, &out.trace) {
        let mut t = BufWriter::new(File::create(path)?);
        write_trace(rows, &mut t)?;
        t.flush()?;
    }
    Ok(())
}

/// Uniform `[0, 1]` entries drawn from the lambda stream of `seed`.
pub fn sample_base_lambda(sources: usize, max_cost: usize, seed: u64) -> ArrivalMatrix {
    let mut rng = stream_rng(seed, RngStream::Lambda);
    let means = Array2::from_shape_simple_fn((sources, max_cost), || rng.random::<f64>());
    ArrivalMatrix::new(means).expect("uniform draws are nonnegative")
}

/// `base` rescaled so that `sum k lambda = target`.
pub fn scale_to_load(base: &ArrivalMatrix, target: f64) -> Result<ArrivalMatrix> {
    let load = base.slot_load();
    if !(load > 0.0) {
        return Err(Error::Parameter("cannot rescale an all-zero lambda".into()));
    }
    Ok(base.scaled(target / load))
}

/// Rows of a sweep in grid, seed, policy order.
pub fn sweep_rows(
    system: &SystemConfig,
    window_thresholds: Option<&[u64]>,
    policies: &[PolicyKind],
    variable: SweepVariable,
    grid: &[f64],
    seeds: u64,
    master_seed: u64,
    run: &RunConfig,
) -> Result<Vec<String>> {
    if grid.is_empty() || seeds == 0 || policies.is_empty() {
        return Err(Error::Parameter("sweep needs a grid, at least one seed and one policy".into()));
    }
    let base = sample_base_lambda(system.sources, system.max_downlink_cost, master_seed);
    let mut points = Vec::with_capacity(grid.len());
    for &g in grid {
        let mut point = system.clone();
        match variable {
            SweepVariable::Load => point.arrivals = scale_to_load(&base, g)?,
            SweepVariable::Tradeoff => point.tradeoff = g,
        }
        point.validate()?;
        points.push(point);
    }
    let tasks: Vec<(usize, u64, PolicyKind)> = (0..points.len())
        .flat_map(|p| (0..seeds).flat_map(move |s| policies.iter().map(move |&k| (p, s, k))))
        .collect();
    tasks
        .par_iter()
        .map(|&(p, s, kind)| {
            let point = &points[p];
            let mut rc = *run;
            rc.seed = master_seed.wrapping_add(s);
            match build_policy(kind, point, window_thresholds) {
                Err(Error::Infeasible(_)) => Ok(empty_report_row(
                    kind.as_str(),
                    rc.seed,
                    rc.frames,
                    point.tradeoff,
                    point.arrivals.slot_load(),
                )),
                Err(e) => Err(e),
                Ok(mut policy) => Ok(crate::simulator::run(point, &rc, &mut policy)?.report.csv_row()),
            }
        })
        .collect()
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut file = load_config(&args.config)?;
    if let Some(v) = args.tradeoff {
        file.system.tradeoff = v;
    }
    let policies = if args.policy.is_empty() {
        vec![pick_policy(None, &file)]
    } else {
        args.policy.clone()
    };
    let rc = run_config(args.frames, args.warmup, args.seed)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Parameter(e.to_string()))?;
    let rows = pool.install(|| {
        sweep_rows(
            &file.system,
            file.window_thresholds.as_deref(),
            &policies,
            args.variable,
            &args.grid,
            args.seeds,
            args.seed,
            &rc,
        )
    })?;
    let mut w = output(args.out.as_deref())?;
    writeln!(w, "{REPORT_HEADER}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

fn region(args: &RegionArgs) -> Result<()> {
    let file = load_config(&args.config)?;
    let khat = current_khat(&file.system)?;
    let verdict = RegionVerdict::evaluate(&file.system.arrivals, file.system.slots, khat);
    let mut w = output(args.out.as_deref())?;
    writeln!(w, "{}", RegionVerdict::CSV_HEADER)?;
    writeln!(w, "{}", verdict.csv_row())?;
    w.flush()?;
    Ok(())
}

fn bounds(args: &BoundsArgs) -> Result<()> {
    let file = load_config(&args.config)?;
    let khat = current_khat(&file.system)?;
    let grid = if args.tradeoff.is_empty() {
        vec![file.system.tradeoff]
    } else {
        args.tradeoff.clone()
    };
    let mut w = output(args.out.as_deref())?;
    writeln!(w, "{}", BoundReport::CSV_HEADER)?;
    for v in grid {
        let report = BoundReport::evaluate(&file.system, khat, v).map_err(|e| match e {
            Error::Domain(msg) => Error::Config(msg),
            other => other,
        })?;
        writeln!(w, "{}", report.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Drops the last item, so instances whose best plan uses it come out short.
fn faulty_solver(items: &[KnapsackItem], capacity: usize) -> KnapsackSolution {
    let kept = items.len().saturating_sub(1);
    let mut solution = solve_dp(&items[..kept], capacity);
    solution.counts.resize(items.len(), 0);
    solution
}

fn self_check(args: &ValidateArgs) -> i32 {
    let solver: Solver = if args.inject_dp_fault { faulty_solver } else { solve_dp };
    let reports = validate::run_all(args.seed, solver);
    let mut failed = false;
    for r in &reports {
        println!("{r}");
        failed |= !r.passed();
    }
    i32::from(failed)
}
