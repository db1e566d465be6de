//! `plap`: eigen, solve, verify, hypotheses, sweep and mesh-export driven by
//! a JSON run configuration.
//!
//! Exit status: 0 when every requested check passed (or `--report-only` was
//! given), 1 when a check or a computation failed, 2 for invalid input.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Io(_) | CliError::Failed(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "plap", version, about = "Singular, discontinuous p-Laplacian Dirichlet problems")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized checks; overrides the configuration's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent runs for `sweep` [default: available cores].
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Relative quotient change that stops the eigen solver
    #[arg(long, global = true)]
    tol_eigen: Option<f64>,
    /// Dual-norm residual that stops each energy minimization
    #[arg(long, global = true)]
    tol_solve: Option<f64>,
    /// Relative Cauchy increment that ends the continuation early
    #[arg(long, global = true)]
    tol_cauchy: Option<f64>,
    /// Pointwise tolerance of the inclusion check
    #[arg(long, global = true)]
    tol_inclusion: Option<f64>,
    /// Exit 0 even when checks fail; failures are still written to the reports.
    #[arg(long, global = true)]
    report_only: bool,
}

#[derive(Subcommand)]
enum Command {
    /// First eigenpair: eigen.csv, phi1.csv, eigen.json.
    Eigen,
    /// Full solve: config, mesh, eigenpair, hypotheses, solution.csv, continuation.csv, solve.json.
    Solve,
    /// Checks a solve run directory: verify.json, inclusion.csv.
    Verify {
        /// Directory written by `solve`; its config.json is used unless --config is given.
        #[arg(long)]
        run: PathBuf,
    },
    /// Structural hypotheses on the reaction against the discrete λ₁.
    Hypotheses,
    /// Solve and verify every point of the configuration's `sweep` grid.
    Sweep,
    /// Mesh file and node table.
    MeshExport,
}

fn init_logging() -> Result<(), CliError> {
    let level = match std::env::var("PLAP_LOG").as_deref() {
        Err(_) | Ok("info") => LevelFilter::Info,
        Ok("quiet") => LevelFilter::Off,
        Ok("debug") => LevelFilter::Debug,
        Ok(other) => return Err(CliError::Usage(format!("PLAP_LOG must be quiet, info or debug, got `{other}`"))),
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    Ok(())
}

fn load(common: &Common, fallback: Option<&Path>) -> Result<RunConfig, CliError> {
    let path = match (&common.config, fallback) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p.to_path_buf(),
        (None, None) => return Err(CliError::Usage("--config <path> is required".into())),
    };
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let t = &mut cfg.tolerances;
    for (slot, value) in [
        (&mut t.eigen, common.tol_eigen),
        (&mut t.solve, common.tol_solve),
        (&mut t.cauchy, common.tol_cauchy),
        (&mut t.inclusion, common.tol_inclusion),
    ] {
        if let Some(v) = value {
            *slot = v;
        }
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("plap-out"))
}

fn check(passed: bool, what: &str, report_only: bool) -> Result<(), CliError> {
    if passed || report_only {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{what} failed")))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = &cli.common;
    match cli.command {
        Command::Eigen => {
            let cfg = load(common, None)?;
            let dir = out_dir(&cfg);
            let eig = commands::in_run_dir(&dir, || commands::eigen(&cfg, &dir))?;
            println!("lambda1 = {}", eig.lambda1);
        }
        Command::Solve => {
            let cfg = load(common, None)?;
            let dir = out_dir(&cfg);
            let s = commands::in_run_dir(&dir, || commands::solve(&cfg, &dir))?;
            println!("lambda1 = {}; sup u = {}", s.eigen.lambda1, s.continuation.limit_sup);
        }
        Command::Verify { run } => {
            let cfg = load(common, Some(&run.join("config.json")))?;
            let dir = common.out.clone().unwrap_or_else(|| run.clone());
            let report = commands::in_run_dir(&dir, || commands::verify_run(&cfg, &run, &dir))?;
            match report.inclusion.done() {
                Some(i) => println!("inclusion fraction {}; passed: {}", i.fraction, report.passed),
                None => println!("passed: {}", report.passed),
            }
            check(report.passed, &format!("verification ({})", report.failures.join("; ")), common.report_only)?;
        }
        Command::Hypotheses => {
            let cfg = load(common, None)?;
            let dir = out_dir(&cfg);
            let report = commands::in_run_dir(&dir, || commands::hypotheses(&cfg, &dir))?;
            println!(
                "holds: (i) {} (ii) {} (iii) {} (iv) {} (v) {} (vi) {}",
                report.holds_i, report.holds_ii, report.holds_iii, report.holds_iv, report.holds_v, report.holds_vi
            );
            check(report.all_hold(), "hypothesis check", common.report_only)?;
        }
        Command::Sweep => {
            let cfg = load(common, None)?;
            if cfg.sweep.is_empty() {
                return Err(CliError::Config { field: "sweep".into(), reason: "no parameter grid given".into() });
            }
            let jobs = match common.jobs {
                Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
                Some(j) => j,
                None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            };
            let outcome = commands::sweep(&cfg, &out_dir(&cfg), jobs)?;
            println!("{} runs: {} failed, {} unverified", outcome.runs, outcome.failed, outcome.unverified);
            if outcome.failed > 0 {
                return Err(CliError::Failed(format!("{} of {} runs failed", outcome.failed, outcome.runs)));
            }
            check(outcome.unverified == 0, "verification", common.report_only)?;
        }
        Command::MeshExport => {
            let cfg = load(common, None)?;
            let dir = out_dir(&cfg);
            commands::in_run_dir(&dir, || commands::mesh_export(&cfg, &dir))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_logging() {
        eprintln!("plap: {e}");
        return ExitCode::from(e.exit_code());
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("plap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
