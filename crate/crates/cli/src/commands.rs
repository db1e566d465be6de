//! Subcommand implementations. Each writes into one run directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use plap_core::eigen::{first_eigenpair, EigenSummary, Eigenpair};
use plap_core::mesh::{build_mesh, norm_linf, write_mesh, FeFunction, Mesh};
use plap_core::reaction::{
    check_hypotheses, growth_constants, GrowthConstants, HypothesisReport, Reaction, DEFAULT_SAMPLES_PER_DECADE,
};
use plap_core::solver::{
    build_subsolution, continuation, failed_hypotheses, ContinuationOptions, ContinuationSummary, SubsolutionSummary,
};
use plap_core::verify::{verify, Checked, VerificationReport, VerifyInputs, VerifyOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;
use crate::CliError;

pub const FAILED_MARKER: &str = "FAILED";

/// Creates `dir`, runs `body` in it and leaves a `FAILED` marker holding the
/// error if it fails; a stale marker from an earlier run is removed first.
pub fn in_run_dir<T>(dir: &Path, body: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| io_error(&marker, e))?;
    }
    let out = body();
    if let Err(e) = &out {
        // Best effort: the original error is more useful than a marker failure.
        let _ = std::fs::write(&marker, format!("{e}\n"));
    }
    out
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn core(e: plap_core::Error) -> CliError {
    CliError::Failed(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| io_error(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn mesh_of(cfg: &RunConfig) -> Result<Arc<Mesh>, CliError> {
    build_mesh(cfg.domain, cfg.resolution).map(Arc::new).map_err(core)
}

#[derive(Serialize)]
struct NodeRow {
    node: usize,
    x: f64,
    y: f64,
    boundary: bool,
    distance: f64,
}

pub fn mesh_export(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let mesh = mesh_of(cfg)?;
    let path = dir.join("mesh.txt");
    let mut out = create(&path)?;
    write_mesh(&mesh, &mut out).map_err(core)?;
    out.flush().map_err(|e| io_error(&path, e))?;
    write_rows(
        &dir.join("nodes.csv"),
        mesh.nodes().iter().enumerate().map(|(i, x)| NodeRow {
            node: i,
            x: x[0],
            y: x[1],
            boundary: mesh.is_boundary(i),
            distance: mesh.nodal_distance()[i],
        }),
    )?;
    info!("mesh: {} nodes, {} elements", mesh.n_nodes(), mesh.elements().len());
    Ok(())
}

#[derive(Serialize)]
struct ValueRow {
    node: usize,
    x: f64,
    y: f64,
    value: f64,
}

#[derive(Serialize)]
struct EigenReport<'a> {
    summary: EigenSummary,
    history: &'a [f64],
}

fn eigenpair(cfg: &RunConfig, mesh: &Arc<Mesh>, dir: &Path) -> Result<Eigenpair, CliError> {
    let eig = first_eigenpair(mesh, cfg.p, cfg.tolerances.eigen).map_err(core)?;
    write_rows(&dir.join("eigen.csv"), [eig.summary()])?;
    write_rows(
        &dir.join("phi1.csv"),
        mesh.nodes().iter().zip(eig.phi1.values()).enumerate().map(|(i, (x, &v))| ValueRow {
            node: i,
            x: x[0],
            y: x[1],
            value: v,
        }),
    )?;
    write_json(&dir.join("eigen.json"), &EigenReport { summary: eig.summary(), history: &eig.history })?;
    info!("lambda1 = {} ({} iterations)", eig.lambda1, eig.iterations);
    Ok(eig)
}

pub fn eigen(cfg: &RunConfig, dir: &Path) -> Result<Eigenpair, CliError> {
    eigenpair(cfg, &mesh_of(cfg)?, dir)
}

fn reaction_of(cfg: &RunConfig) -> Result<Reaction, CliError> {
    cfg.reaction.build(cfg.p).map_err(|e| CliError::Config { field: "reaction".into(), reason: e.to_string() })
}

fn hypotheses_for(cfg: &RunConfig, r: &Reaction, lambda1: f64, dir: &Path) -> Result<HypothesisReport, CliError> {
    let report = check_hypotheses(r, cfg.p, lambda1, DEFAULT_SAMPLES_PER_DECADE).map_err(core)?;
    write_json(&dir.join("hypotheses.json"), &report)?;
    for name in failed_hypotheses(&report) {
        info!("hypothesis {name} fails");
    }
    Ok(report)
}

/// Hypothesis report against the discrete `λ₁` of the configured mesh.
pub fn hypotheses(cfg: &RunConfig, dir: &Path) -> Result<HypothesisReport, CliError> {
    let r = reaction_of(cfg)?;
    let eig = eigen(cfg, dir)?;
    hypotheses_for(cfg, &r, eig.lambda1, dir)
}

#[derive(Serialize)]
struct SolutionRow {
    node: usize,
    x: f64,
    y: f64,
    u: f64,
    v: f64,
    ubar: f64,
}

#[derive(Deserialize)]
struct SolutionRecord {
    u: f64,
    v: f64,
    ubar: f64,
}

#[derive(Serialize)]
struct InclusionRow {
    x: f64,
    y: f64,
    u: f64,
    v: f64,
    lower: f64,
    upper: f64,
    excess: f64,
}

/// One node of the iterate `u_ε` of one continuation step.
#[derive(Serialize)]
struct IterateRow {
    step: usize,
    eps: f64,
    node: usize,
    x: f64,
    y: f64,
    u: f64,
}

#[derive(Serialize)]
struct EnergyRow {
    step: usize,
    eps: f64,
    iteration: usize,
    energy: f64,
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    eps: f64,
    eta: f64,
    iterations: usize,
    residual: f64,
    roundoff_limited: bool,
    w1p: f64,
    cauchy_increment: Option<f64>,
    ordering_margin: f64,
    apriori_holds: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub eigen: EigenSummary,
    pub subsolution: SubsolutionSummary,
    pub growth: GrowthConstants,
    pub continuation: ContinuationSummary,
}

/// Eigenpair, hypotheses, sub-solution and continuation; writes every stage.
pub fn solve(cfg: &RunConfig, dir: &Path) -> Result<SolveReport, CliError> {
    // The run directory is self-describing and relocatable.
    write_json(&dir.join("config.json"), &RunConfig { out: None, ..cfg.clone() })?;
    mesh_export(cfg, dir)?;
    let mesh = mesh_of(cfg)?;
    let r = reaction_of(cfg)?;
    let eig = eigenpair(cfg, &mesh, dir)?;
    let report = hypotheses_for(cfg, &r, eig.lambda1, dir)?;
    if !report.all_hold() {
        return Err(CliError::Failed(format!("hypotheses fail: {}", failed_hypotheses(&report).join(", "))));
    }
    let sub = build_subsolution(&eig, &r, &report).map_err(core)?;
    let growth = growth_constants(&r, &report, norm_linf(&sub.ubar)).map_err(core)?;
    let opts = ContinuationOptions { tol: cfg.tolerances.solve, cauchy_tol: cfg.tolerances.cauchy };
    let result = continuation(&r, &sub, cfg.p, &cfg.schedule, Some(&growth), &opts).map_err(core)?;
    write_rows(
        &dir.join("solution.csv"),
        (0..mesh.n_nodes()).map(|i| SolutionRow {
            node: i,
            x: mesh.nodes()[i][0],
            y: mesh.nodes()[i][1],
            u: result.limit.values()[i],
            v: result.residual_field.values()[i],
            ubar: sub.ubar.values()[i],
        }),
    )?;
    write_rows(
        &dir.join("iterates.csv"),
        result.solutions.iter().zip(&result.epsilons).enumerate().flat_map(|(k, (u, &eps))| {
            let nodes = mesh.nodes();
            u.values().iter().enumerate().map(move |(i, &ui)| IterateRow {
                step: k,
                eps,
                node: i,
                x: nodes[i][0],
                y: nodes[i][1],
                u: ui,
            })
        }),
    )?;
    write_rows(
        &dir.join("energy.csv"),
        result.steps.iter().enumerate().flat_map(|(k, s)| {
            s.energy_trace.iter().enumerate().map(move |(it, &energy)| EnergyRow {
                step: k,
                eps: s.eps,
                iteration: it,
                energy,
            })
        }),
    )?;
    write_rows(
        &dir.join("continuation.csv"),
        result.steps.iter().enumerate().map(|(k, s)| StepRow {
            step: k,
            eps: s.eps,
            eta: s.eta,
            iterations: s.iterations,
            residual: s.residual,
            roundoff_limited: s.roundoff_limited,
            w1p: s.w1p,
            cauchy_increment: s.cauchy_increment,
            ordering_margin: s.ordering_margin,
            apriori_holds: s.apriori.map(|a| a.holds),
        }),
    )?;
    let out = SolveReport { eigen: eig.summary(), subsolution: sub.summary(), growth, continuation: result.summary() };
    write_json(&dir.join("solve.json"), &out)?;
    info!("solved: sup u = {}, {} continuation steps", out.continuation.limit_sup, out.continuation.steps.len());
    Ok(out)
}

/// Re-reads a `solve` run directory and writes `verify.json` and the
/// per-point `inclusion.csv`.
pub fn verify_run(cfg: &RunConfig, run: &Path, out: &Path) -> Result<VerificationReport, CliError> {
    let mesh = mesh_of(cfg)?;
    let r = reaction_of(cfg)?;
    let path = run.join("solution.csv");
    let mut reader = csv::Reader::from_path(&path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    let (mut u, mut v, mut ubar) = (Vec::new(), Vec::new(), Vec::new());
    for row in reader.deserialize::<SolutionRecord>() {
        let row = row.map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        u.push(row.u);
        v.push(row.v);
        ubar.push(row.ubar);
    }
    if u.len() != mesh.n_nodes() {
        return Err(CliError::Failed(format!(
            "{} has {} rows but the configured mesh has {} nodes",
            path.display(),
            u.len(),
            mesh.n_nodes()
        )));
    }
    let field = |values| FeFunction::new(Arc::clone(&mesh), values).map_err(core);
    let (u, v, ubar) = (field(u)?, field(v)?, field(ubar)?);
    let solved: SolveReport = read_json(&run.join("solve.json"))?;
    let inputs = VerifyInputs {
        r: &r,
        p: cfg.p,
        u: &u,
        v: &v,
        ubar: Some(&ubar),
        growth: Some(&solved.growth),
        w1p_norms: Some(&solved.continuation.w1p_norms),
    };
    let opts = VerifyOptions {
        tol: cfg.tolerances.inclusion,
        c_slack: cfg.tolerances.slack,
        min_fraction: cfg.tolerances.min_fraction,
        seed: cfg.seed,
        ..VerifyOptions::default()
    };
    let report = verify(&inputs, &opts);
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    write_json(&out.join("verify.json"), &report)?;
    if let Checked::Done(inc) = &report.inclusion {
        write_rows(
            &out.join("inclusion.csv"),
            inc.data.iter().map(|q| InclusionRow {
                x: q.x[0],
                y: q.x[1],
                u: q.u,
                v: q.v,
                lower: q.lower,
                upper: q.upper,
                excess: q.excess,
            }),
        )?;
        info!("inclusion fraction {} (worst excess {:e})", inc.fraction, inc.worst);
    }
    for f in &report.failures {
        info!("verification failure: {f}");
    }
    Ok(report)
}

#[derive(Serialize)]
struct IndexRow {
    run: String,
    parameters: String,
    status: String,
    lambda1: Option<f64>,
    l_bound: Option<f64>,
    inclusion_fraction: Option<f64>,
    linf: Option<f64>,
    l_hat: Option<f64>,
    verified: Option<bool>,
}

fn label(labels: &[(String, Value)]) -> String {
    labels.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

type RunOutcome = (SolveReport, VerificationReport);

fn sweep_one(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome, CliError> {
    in_run_dir(dir, || {
        let solved = solve(cfg, dir)?;
        let report = verify_run(cfg, dir, dir)?;
        Ok((solved, report))
    })
}

pub struct SweepOutcome {
    pub runs: usize,
    pub failed: usize,
    pub unverified: usize,
}

/// Runs every grid point in its own directory `run_NNN` on a pool of `jobs`
/// threads and writes `index.csv`. Failures are recorded, not propagated.
pub fn sweep(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<SweepOutcome, CliError> {
    let runs = cfg.expand()?;
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    write_json(&out.join("sweep.json"), cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    let results: Vec<(PathBuf, Result<RunOutcome, CliError>)> = pool.install(|| {
        runs.par_iter()
            .enumerate()
            .map(|(k, (labels, run))| {
                let dir = out.join(format!("run_{k:03}"));
                info!("run_{k:03}: {}", label(labels));
                let result = sweep_one(run, &dir);
                (dir, result)
            })
            .collect()
    });
    let mut outcome = SweepOutcome { runs: runs.len(), failed: 0, unverified: 0 };
    let rows: Vec<IndexRow> = runs
        .iter()
        .zip(&results)
        .map(|((labels, _), (dir, result))| {
            let run = dir.file_name().expect("run directories have names").to_string_lossy().into_owned();
            match result {
                Ok((solved, report)) => {
                    if !report.passed {
                        outcome.unverified += 1;
                    }
                    IndexRow {
                        run,
                        parameters: label(labels),
                        status: if report.passed {
                            "verified".into()
                        } else {
                            format!("unverified: {}", report.failures.join("; "))
                        },
                        lambda1: Some(solved.eigen.lambda1),
                        l_bound: solved.continuation.l_bound,
                        inclusion_fraction: report.inclusion.done().map(|i| i.fraction),
                        linf: Some(solved.continuation.limit_sup),
                        l_hat: report.boundary_growth.done().map(|b| b.l_hat),
                        verified: Some(report.passed),
                    }
                }
                Err(e) => {
                    outcome.failed += 1;
                    IndexRow {
                        run,
                        parameters: label(labels),
                        status: format!("failed: {e}"),
                        lambda1: None,
                        l_bound: None,
                        inclusion_fraction: None,
                        linf: None,
                        l_hat: None,
                        verified: None,
                    }
                }
            }
        })
        .collect();
    write_rows(&out.join("index.csv"), rows)?;
    Ok(outcome)
}
