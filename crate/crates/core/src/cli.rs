//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when arguments fail validation (before any
//! work starts), 1 when a run fails afterwards.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::chenstein::GridRule;
use crate::error::{Error, Result};
use crate::experiment::{
    persist, run_experiment_with_workers, sweep_csv, ExperimentConfig, OutputPaths, SummaryReport,
};
use crate::geometry::{union_two_balls_cone_sector, union_two_balls_exact, BallUnionQuery};
use crate::limits::{expected_count, ThresholdParams};
use crate::measures::DensitySpec;

/// Default output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "KNNBALL_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "knnball-out";

#[derive(Debug, Parser)]
#[command(
    name = "knnball",
    version,
    about = "Large kth-nearest-neighbor ball contents: formulas and simulations"
)]
pub struct Cli {
    /// Print machine-readable JSON on stdout instead of the text summary.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads for replicates (default: one per core).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Volume of the union of two congruent balls.
    #[command(alias = "geometry")]
    Volume(VolumeArgs),
    /// Threshold and exact expected exceedance count.
    Expectation(ExpectationArgs),
    /// Monte Carlo run: replicate CSV and summary JSON.
    Simulate(SingleRunArgs),
    /// Monte Carlo run with Chen–Stein diagnostics.
    Chenstein(SingleRunArgs),
    /// One run per sample size; one summary row per size.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct VolumeArgs {
    #[arg(long)]
    pub dim: usize,
    /// Distance between the two centers.
    #[arg(long)]
    pub distance: f64,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Also evaluate the cone/sector closed form (exact only in the plane).
    #[arg(long, alias = "paper-formula")]
    pub cone_sector: bool,
}

#[derive(Debug, Args)]
pub struct ExpectationArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 1)]
    pub k: u64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridRuleArg {
    PerAxis,
    Total,
}

impl From<GridRuleArg> for GridRule {
    fn from(r: GridRuleArg) -> Self {
        match r {
            GridRuleArg::PerAxis => GridRule::PerAxis,
            GridRuleArg::Total => GridRule::Total,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub k: u64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t: f64,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Density as a JSON file path or an inline JSON object (default: uniform).
    #[arg(long)]
    pub density: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (default: $KNNBALL_OUT_DIR, else ./knnball-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// How the subcube count follows from n and epsilon.
    #[arg(long, value_enum, default_value_t = GridRuleArg::Total)]
    pub grid_rule: GridRuleArg,
}

#[derive(Debug, Args)]
pub struct SingleRunArgs {
    #[arg(long)]
    pub n: u64,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<u64>,
    /// Include Chen–Stein diagnostics in every row.
    #[arg(long)]
    pub chenstein: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Failure tagged with the exit code it maps to.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    if cli.workers == Some(0) {
        return Err(Failure::Usage("--workers must be positive".into()));
    }
    match &cli.command {
        Command::Volume(a) => volume(a, cli.json, out),
        Command::Expectation(a) => expectation(a, cli.json, out),
        Command::Simulate(a) => single_run(a, false, cli, out),
        Command::Chenstein(a) => single_run(a, true, cli, out),
        Command::Sweep(a) => sweep(a, cli, out),
    }
}

fn volume(a: &VolumeArgs, as_json: bool, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let q = BallUnionQuery::new(a.dim, a.radius, a.distance)?;
    let exact = union_two_balls_exact(&q);
    let cone = if a.cone_sector {
        Some(
            union_two_balls_cone_sector(a.dim, a.distance / a.radius)?
                * a.radius.powi(a.dim as i32),
        )
    } else {
        None
    };
    if as_json {
        let v = json!({"dim": a.dim, "radius": a.radius, "distance": a.distance, "exact": exact, "cone_sector": cone});
        writeln!(out, "{v}").map_err(io_failure)?;
    } else {
        writeln!(out, "union volume (exact):       {exact:.6}").map_err(io_failure)?;
        if let Some(c) = cone {
            writeln!(out, "union volume (cone/sector): {c:.6}").map_err(io_failure)?;
            writeln!(out, "difference:                 {:.6e}", c - exact).map_err(io_failure)?;
        }
    }
    Ok(())
}

fn expectation(
    a: &ExpectationArgs,
    as_json: bool,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let p = ThresholdParams::new(a.n, a.k, a.t)?;
    let v = p.threshold();
    let e = expected_count(&p);
    let target = (-a.t).exp();
    if as_json {
        let j = json!({"n": a.n, "k": a.k, "t": a.t, "threshold": v, "expected_count": e, "target": target, "gap": e - target});
        writeln!(out, "{j}").map_err(io_failure)?;
    } else {
        writeln!(out, "v = {v:.8}").map_err(io_failure)?;
        writeln!(out, "E[C] = {e:.4}").map_err(io_failure)?;
        writeln!(out, "target exp(-t) = {target:.4}").map_err(io_failure)?;
        writeln!(out, "gap = {:.4e}", e - target).map_err(io_failure)?;
    }
    Ok(())
}

fn density_spec(arg: Option<&str>, dim: usize) -> Result<DensitySpec> {
    match arg {
        None => Ok(DensitySpec::uniform(dim)),
        Some(s) if s.trim_start().starts_with('{') => DensitySpec::from_json(s),
        Some(path) => DensitySpec::from_path(Path::new(path)),
    }
}

fn config(
    run: &RunArgs,
    n: u64,
    diagnostics: bool,
) -> std::result::Result<ExperimentConfig, Failure> {
    let mut c = ExperimentConfig::new(run.dim, n, run.k, run.t, run.reps, run.seed);
    c.epsilon = run.epsilon;
    // an unreadable --density is a bad flag, not a runtime failure
    c.density =
        density_spec(run.density.as_deref(), run.dim).map_err(|e| Failure::Usage(e.to_string()))?;
    c.chenstein_diagnostics = diagnostics;
    c.grid_rule = run.grid_rule.into();
    c.validate()?;
    Ok(c)
}

fn out_dir(run: &RunArgs) -> PathBuf {
    run.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn single_run(
    a: &SingleRunArgs,
    diagnostics: bool,
    cli: &Cli,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let cfg = config(&a.run, a.n, diagnostics)?;
    let dir = out_dir(&a.run);
    let report = run_experiment_with_workers(&cfg, cli.workers).map_err(runtime)?;
    let paths = OutputPaths::in_dir(&dir);
    persist(&report, &paths).map_err(runtime)?;
    if let Some(d) = &report.diagnostics {
        let path = dir.join("diagnostics.json");
        let text = serde_json::to_string_pretty(d).map_err(|e| runtime(e.into()))?;
        std::fs::write(&path, text + "\n").map_err(|source| runtime(Error::Io { path, source }))?;
    }
    if cli.json {
        let text = serde_json::to_string_pretty(&report).map_err(|e| runtime(e.into()))?;
        writeln!(out, "{text}").map_err(io_failure)?;
    } else {
        summary_block(&report, out).map_err(io_failure)?;
        writeln!(out, "wrote {}", dir.display()).map_err(io_failure)?;
    }
    Ok(())
}

fn summary_block(r: &SummaryReport, out: &mut dyn Write) -> std::io::Result<()> {
    let c = &r.config;
    writeln!(
        out,
        "d = {}, n = {}, k = {}, t = {}, R = {}, seed = {}",
        c.dim, c.n, c.k, c.t, c.replicates, c.master_seed
    )?;
    writeln!(
        out,
        "mean C = {:.4} ± {:.4} (exact {:.4})",
        r.mean_count, r.se_count, r.expected_count
    )?;
    writeln!(
        out,
        "TV to Poisson = {:.4} ± {:.4}",
        r.tv_to_poisson, r.tv_se
    )?;
    writeln!(out, "KS to Gumbel = {:.4}", r.ks_to_gumbel)?;
    if let Some(d) = &r.diagnostics {
        writeln!(
            out,
            "grid {}^{}: b1 = {:.4e}, b2 = {:.4e}, bound = {:.4} ± {:.4}",
            d.cells_per_axis, c.dim, d.b1, d.b2, d.bound, d.bound_se
        )?;
        writeln!(
            out,
            "mismatch rate = {:.4}, occupancy failure rate = {:.4}, R(n) = {:.4}",
            d.mismatch_rate, d.occupancy_failure_rate, d.rn_estimate
        )?;
    }
    writeln!(out, "runtime = {:.2} s", r.runtime_seconds)
}

fn sweep(a: &SweepArgs, cli: &Cli, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let mut ns = a.n_list.clone();
    ns.sort_unstable();
    let configs = ns
        .iter()
        .map(|&n| config(&a.run, n, a.chenstein))
        .collect::<std::result::Result<Vec<_>, Failure>>()?;
    let dir = out_dir(&a.run);
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let report = run_experiment_with_workers(cfg, cli.workers).map_err(runtime)?;
        persist(
            &report,
            &OutputPaths::in_dir(&dir.join(format!("n{}", cfg.n))),
        )
        .map_err(runtime)?;
        if !cli.json {
            summary_block(&report, out).map_err(io_failure)?;
        }
        reports.push(report);
    }
    let table = sweep_csv(&reports);
    let path = dir.join("sweep.csv");
    std::fs::create_dir_all(&dir).map_err(|source| {
        runtime(Error::Io {
            path: dir.clone(),
            source,
        })
    })?;
    std::fs::write(&path, &table).map_err(|source| {
        runtime(Error::Io {
            path: path.clone(),
            source,
        })
    })?;
    if cli.json {
        let text = serde_json::to_string_pretty(&reports).map_err(|e| runtime(e.into()))?;
        writeln!(out, "{text}").map_err(io_failure)?;
    } else {
        writeln!(out, "wrote {}", path.display()).map_err(io_failure)?;
    }
    Ok(())
}
