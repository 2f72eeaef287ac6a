use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use wfr_core::closed_form::{dirac_distance, DiracPairProblem};
use wfr_core::flow::{estimate_beckner_constant, run_flow, BecknerCertificate, PopulationProblem};
use wfr_core::measures::{GridMeasure, PotentialField};
use wfr_core::otto::{euler_lagrange_residual, hessian_report, integrate_free_particles, particle_energy, FreeParticle, InternalEnergySpec};
use wfr_core::solver::{solve_distance, SolverOptions};
use wfr_core::verify::{self, VerifyOptions};
use wfr_core::{Error, Grid};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VERIFY: u8 = 3;

/// Unbalanced transport distance, geodesics and population gradient flows.
///
/// WFR_THREADS caps the number of worker threads. Exit codes: 0 ok, 1 usage or
/// input error, 2 numerical failure, 3 verification failure.
#[derive(Parser)]
#[command(name = "wfr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance between two grid measures by the primal-dual solver.
    Distance(DistanceArgs),
    /// Closed-form distance between two point charges.
    Dirac(DiracArgs),
    /// Particle trajectory of the geodesic between two point charges.
    Geodesic(GeodesicArgs),
    /// Population gradient flow with the exponential decay check.
    Flow(FlowArgs),
    /// Hessian of an internal energy against its finite-difference oracle.
    Hessian(HessianArgs),
    /// Estimate and validate the entropy-production constant of a box.
    Beckner(BecknerArgs),
    /// Run the invariant suites and write a JUnit-style report.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct DistanceArgs {
    /// Source measure (JSON grid measure).
    #[arg(long)]
    rho0: PathBuf,
    /// Target measure on the same grid.
    #[arg(long)]
    rho1: PathBuf,
    /// Solver options file; unknown keys are rejected.
    #[arg(long)]
    options: Option<PathBuf>,
    /// Overrides the number of time intervals.
    #[arg(long)]
    nt: Option<usize>,
    /// Overrides the iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Where to write the solver report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for the geodesic frames and their index.
    #[arg(long)]
    emit_path: Option<PathBuf>,
}

#[derive(Args)]
struct DiracArgs {
    #[arg(long)]
    k0: f64,
    #[arg(long)]
    k1: f64,
    /// Separation of the two charges.
    #[arg(long)]
    xi: f64,
}

#[derive(Args)]
struct GeodesicArgs {
    #[arg(long)]
    k0: f64,
    #[arg(long)]
    k1: f64,
    #[arg(long)]
    xi: f64,
    /// RK4 step.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Trajectory CSV (t, particle_id, x0, k).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FlowArgs {
    /// Problem file with m, rho0, t_end, dt and sample_every.
    #[arg(long, conflicts_with_all = ["m", "rho0"])]
    config: Option<PathBuf>,
    /// Resource density.
    #[arg(long, requires = "rho0")]
    m: Option<PathBuf>,
    /// Initial population.
    #[arg(long, requires = "m")]
    rho0: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 1)]
    sample_every: usize,
    /// Precomputed certificate (output of `wfr beckner`).
    #[arg(long, conflicts_with = "seed")]
    certificate: Option<PathBuf>,
    /// Seed for estimating the certificate on the fly.
    #[arg(long, required_unless_present = "certificate")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Trace CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HessianArgs {
    /// Density (JSON grid measure).
    #[arg(long)]
    rho: PathBuf,
    /// Potential field (JSON with grid, u, grad, layout).
    #[arg(long)]
    potential: PathBuf,
    /// quadratic, cubic or entropy.
    #[arg(long, default_value = "quadratic")]
    energy: String,
    /// Geodesic step of the finite-difference oracle.
    #[arg(long, default_value_t = 2e-4)]
    dt: f64,
}

#[derive(Args)]
struct BecknerArgs {
    /// Cells along x.
    #[arg(long, default_value_t = 64)]
    nx: usize,
    /// Cells along y; omit for an interval.
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    lx: f64,
    #[arg(long, default_value_t = 1.0)]
    ly: f64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Fresh pairs checked after the estimate.
    #[arg(long, default_value_t = 200)]
    validate: usize,
    #[arg(long)]
    seed: u64,
    /// Certificate JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// `all`, `none` or a comma-separated list of suites.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Smaller grids and fewer random samples.
    #[arg(long)]
    fast: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JUnit-style XML report.
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
    Verification,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(
                Error::InvalidInput(_)
                | Error::GridMismatch(_)
                | Error::MassMismatch { .. }
                | Error::ZeroMass
                | Error::Io(_)
                | Error::Json(_),
            ) => Failure::Usage(e),
            Some(_) => Failure::Numerical(e),
            // context-wrapped io or parse errors from reading inputs
            None if e.chain().any(|c| c.is::<io::Error>() || c.is::<serde_json::Error>()) => Failure::Usage(e),
            None => Failure::Numerical(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match cli.command {
        Command::Distance(a) => cmd_distance(a),
        Command::Dirac(a) => cmd_dirac(a),
        Command::Geodesic(a) => cmd_geodesic(a),
        Command::Flow(a) => cmd_flow(a),
        Command::Hessian(a) => cmd_hessian(a),
        Command::Beckner(a) => cmd_beckner(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Verification) => ExitCode::from(EXIT_VERIFY),
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("WFR_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("WFR_THREADS must be a positive integer, got '{v}'"))?;
        anyhow::ensure!(n > 0, "WFR_THREADS must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn read_measure(path: &Path) -> anyhow::Result<GridMeasure> {
    GridMeasure::read_json(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Writes one line to stdout; a closed pipe (`wfr … | head`) is not an error.
fn emit(line: &str) -> anyhow::Result<()> {
    match writeln!(io::stdout().lock(), "{line}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    emit(&serde_json::to_string_pretty(value)?)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn cmd_distance(a: DistanceArgs) -> CmdResult {
    let rho0 = read_measure(&a.rho0)?;
    let rho1 = read_measure(&a.rho1)?;
    let mut opts: SolverOptions = match &a.options {
        Some(p) => read_json(p)?,
        None => SolverOptions::default(),
    };
    if let Some(nt) = a.nt {
        opts.nt = nt;
    }
    if let Some(it) = a.max_iter {
        opts.max_iter = it;
    }
    let (report, path) = solve_distance(&rho0, &rho1, &opts)?;
    if !report.converged {
        log::warn!("solver stopped after {} iterations without meeting the tolerances", report.iterations);
    }
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    if let Some(dir) = &a.emit_path {
        path.write_dir(dir).with_context(|| format!("writing frames to {}", dir.display()))?;
    }
    emit(&format!("{:.17e}", report.d2.max(0.0).sqrt()))?;
    Ok(())
}

fn cmd_dirac(a: DiracArgs) -> CmdResult {
    let (d2, geo) = dirac_distance(&DiracPairProblem::new(a.k0, a.k1, a.xi)?)?;
    let arc = geo.transport;
    print_json(&json!({
        "d2": d2,
        "strategy": geo.strategy,
        "a": arc.map(|t| t.a),
        "b": arc.map(|t| t.b),
        "c": arc.map(|t| t.c),
        "gamma0": geo.gamma0,
        "gamma1": geo.gamma1,
    }))?;
    Ok(())
}

fn cmd_geodesic(a: GeodesicArgs) -> CmdResult {
    let (d2, geo) = dirac_distance(&DiracPairProblem::new(a.k0, a.k1, a.xi)?)?;
    let traj = integrate_free_particles(&[FreeParticle::from_dirac(&geo)?], 1.0, a.dt)?;
    let mut max_error: f64 = 0.0;
    let mut el_residual: f64 = 0.0;
    for (t, frame) in traj.times.iter().zip(&traj.frames) {
        let t = t.min(1.0);
        let (k, s) = geo.eval(t)?;
        max_error = max_error.max((frame[0].k - k).abs()).max((frame[0].x[0] - s).abs());
        let (r1, r2) = euler_lagrange_residual(&geo, t)?;
        el_residual = el_residual.max(r1.abs()).max(r2.abs());
    }
    if let Some(p) = &a.out {
        let mut w = create(p)?;
        traj.write_csv(&mut w)?;
        w.flush().map_err(anyhow::Error::from)?;
    }
    print_json(&json!({
        "d2": d2,
        "strategy": geo.strategy,
        "particle_energy": particle_energy(&traj).1,
        "max_error": max_error,
        "el_residual": el_residual,
        "steps": traj.times.len() - 1,
    }))?;
    Ok(())
}

fn cmd_flow(a: FlowArgs) -> CmdResult {
    let prob = match (&a.config, &a.m, &a.rho0) {
        (Some(c), _, _) => read_json::<PopulationProblem>(c)?,
        (None, Some(m), Some(r)) => {
            let m = read_measure(m)?;
            let rho0 = read_measure(r)?;
            let dt = match a.dt {
                Some(dt) => dt,
                None => {
                    // half the explicit stability bound at the start
                    let h = m.grid().spacing.iter().cloned().fold(f64::INFINITY, f64::min);
                    0.125 * h * h / rho0.max().max(m.max())
                }
            };
            PopulationProblem { sample_every: a.sample_every, ..PopulationProblem::new(m, rho0, a.t_end, dt)? }
        }
        _ => return Err(Failure::Usage(anyhow::anyhow!("give either --config or both --m and --rho0"))),
    };
    prob.validate()?;
    let cert: BecknerCertificate = match (&a.certificate, a.seed) {
        (Some(p), _) => read_json(p)?,
        (None, Some(seed)) => estimate_beckner_constant(prob.m.grid(), a.trials, seed)?,
        (None, None) => return Err(Failure::Usage(anyhow::anyhow!("--certificate or --seed is required"))),
    };
    let trace = run_flow(&prob)?;
    if let Some(p) = &a.out {
        let mut w = create(p)?;
        trace.write_csv(&mut w)?;
        w.flush().map_err(anyhow::Error::from)?;
    }
    let c0 = prob.c0();
    let phi = cert.phi(c0);
    let margin = trace.decay_margin(phi);
    print_json(&json!({
        "fitted_rate": trace.fitted_rate(),
        "c0": c0,
        "C_Omega": cert.c_omega,
        "phi_c0": phi,
        "decay_margin": margin,
        "bound_holds": margin >= 0.0,
        "steps": trace.steps,
        "max_dissipation_residual": trace.max_dissipation_residual,
    }))?;
    Ok(())
}

fn cmd_hessian(a: HessianArgs) -> CmdResult {
    let spec = InternalEnergySpec::preset(&a.energy)?;
    let rho = read_measure(&a.rho)?;
    let pot: PotentialField = read_json(&a.potential)?;
    let r = hessian_report(&rho, &pot, &spec, a.dt)?;
    print_json(&json!({
        "energy": spec.name,
        "formula_value": r.formula_value,
        "fd_value": r.fd_value,
        "rel_err": r.rel_err,
    }))?;
    Ok(())
}

fn cmd_beckner(a: BecknerArgs) -> CmdResult {
    let grid = match a.ny {
        None => Grid::interval(a.nx, 0.0, a.lx)?,
        Some(ny) => Grid::rectangle(a.nx, ny, (0.0, 0.0), (a.lx, a.ly))?,
    };
    let mut cert = estimate_beckner_constant(&grid, a.trials, a.seed)?;
    if a.validate > 0 {
        cert = cert.validate(&grid, a.validate, a.seed.wrapping_add(1))?;
    }
    if let Some(p) = &a.out {
        write_json(p, &cert)?;
    }
    print_json(&cert)?;
    if cert.min_margin < 0.0 {
        eprintln!("certificate violated on a fresh pair (margin {:.3e})", cert.min_margin);
        return Err(Failure::Verification);
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let opts = VerifyOptions { fast: a.fast, seed: a.seed };
    let results = verify::run(&a.suite, &opts)?;
    for s in &results {
        for c in &s.cases {
            emit(&format!("{} {}::{} {}", if c.passed { "PASS" } else { "FAIL" }, s.name, c.name, c.detail))?;
        }
    }
    let xml = verify::junit_xml(&results);
    if let Some(p) = &a.report {
        std::fs::write(p, &xml).with_context(|| format!("writing {}", p.display()))?;
    }
    let total: usize = results.iter().map(|s| s.cases.len()).sum();
    let failed: usize = results.iter().map(|s| s.failures()).sum();
    emit(&format!("{total} cases, {failed} failed"))?;
    if failed > 0 {
        return Err(Failure::Verification);
    }
    Ok(())
}
