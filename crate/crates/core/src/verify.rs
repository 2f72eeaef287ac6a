//! Invariant suites run by `wfr verify`, with a JUnit-style XML report.
//!
//! Every random choice comes from the seed, and no timing goes into the
//! report, so equal seeds give byte-identical XML.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closed_form::{dirac_distance, dist_proportional, dist_to_zero, w2_vs_d_gap, DiracPairProblem, Strategy};
use crate::error::{Error, Result};
use crate::flow::{estimate_beckner_constant, random_field, run_flow, PopulationProblem};
use crate::grid::Grid;
use crate::measures::{bounded_lipschitz, gaussian_blob, wasserstein2_1d, GridMeasure, PotentialField};
use crate::otto::{
    direction_invariance_check, euler_lagrange_residual, hessian_report, integrate_free_particles, particle_energy,
    speed_drift, FreeParticle, InternalEnergySpec,
};
use crate::solver::{solve_distance, SolverOptions};

pub const SUITES: [&str; 11] = [
    "closed_form",
    "metric_axioms",
    "scaling",
    "w2_bound",
    "bl_bound",
    "constant_speed",
    "trajectories",
    "hj",
    "hessian",
    "flow",
    "beckner",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Smaller grids and fewer random samples.
    pub fast: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: Vec<CaseResult>,
}

impl SuiteResult {
    pub fn failures(&self) -> usize {
        self.cases.iter().filter(|c| !c.passed).count()
    }
}

/// Suite names selected by `none`, `all`, or a comma-separated list.
pub fn select(filter: &str) -> Result<Vec<&'static str>> {
    match filter {
        "none" => Ok(Vec::new()),
        "all" => Ok(SUITES.to_vec()),
        list => list
            .split(',')
            .map(|name| {
                SUITES
                    .iter()
                    .copied()
                    .find(|s| *s == name.trim())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown suite '{name}'; known: {}", SUITES.join(", "))))
            })
            .collect(),
    }
}

pub fn run(filter: &str, opts: &VerifyOptions) -> Result<Vec<SuiteResult>> {
    Ok(select(filter)?.into_iter().map(|s| run_suite(s, opts)).collect())
}

pub fn all_passed(results: &[SuiteResult]) -> bool {
    results.iter().all(|s| s.failures() == 0)
}

pub fn run_suite(name: &str, opts: &VerifyOptions) -> SuiteResult {
    let mut ctx = Ctx { opts: *opts, rng: suite_rng(opts.seed, name), cases: Vec::new() };
    match name {
        "closed_form" => closed_form(&mut ctx),
        "metric_axioms" => metric_axioms(&mut ctx),
        "scaling" => scaling(&mut ctx),
        "w2_bound" => w2_bound(&mut ctx),
        "bl_bound" => bl_bound(&mut ctx),
        "constant_speed" => constant_speed(&mut ctx),
        "trajectories" => trajectories(&mut ctx),
        "hj" => hj(&mut ctx),
        "hessian" => hessian(&mut ctx),
        "flow" => flow(&mut ctx),
        "beckner" => beckner(&mut ctx),
        other => ctx.cases.push(CaseResult { name: "lookup".into(), passed: false, detail: format!("unknown suite {other}") }),
    }
    SuiteResult { name: name.to_string(), cases: ctx.cases }
}

fn suite_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SUITES.iter().position(|s| *s == name).unwrap_or(SUITES.len()) as u64);
    rng
}

struct Ctx {
    opts: VerifyOptions,
    rng: ChaCha8Rng,
    cases: Vec<CaseResult>,
}

impl Ctx {
    /// Records a case; an error inside it counts as a failure.
    fn case(&mut self, name: impl Into<String>, f: impl FnOnce(&mut ChaCha8Rng) -> Result<(bool, String)>) {
        let (passed, detail) = f(&mut self.rng).unwrap_or_else(|e| (false, format!("error: {e}")));
        self.cases.push(CaseResult { name: name.into(), passed, detail });
    }

    fn grid(&self) -> Grid {
        Grid::interval(if self.opts.fast { 32 } else { 64 }, 0.0, 1.0).expect("valid grid")
    }

    /// Fast mode only coarsens space: the time-average bias of the blob→0
    /// case grows quickly when `nt` drops below 32.
    fn solver(&self) -> SolverOptions {
        SolverOptions::default()
    }

    fn count(&self, full: usize, fast: usize) -> usize {
        if self.opts.fast {
            fast
        } else {
            full
        }
    }
}

/// Solver gap tolerance `ε_s = 1e-2 · 2√M`, with `M` the largest mass involved.
pub fn solver_tolerance(masses: &[f64]) -> f64 {
    1e-2 * dist_to_zero(masses.iter().cloned().fold(0.0, f64::max))
}

fn distance(a: &GridMeasure, b: &GridMeasure, opts: &SolverOptions) -> Result<f64> {
    Ok(solve_distance(a, b, opts)?.0.d2.max(0.0).sqrt())
}

/// One or two blobs with centers in `[0.25, 0.75]`, widths of 3 to 6 cells and
/// masses in `[0.5, 1.5]`.
fn random_blobs(grid: &Grid, rng: &mut ChaCha8Rng) -> Result<GridMeasure> {
    let h = grid.spacing[0];
    let count = rng.gen_range(1..=2);
    let mut values = vec![0.0; grid.len()];
    for _ in 0..count {
        let c = rng.gen_range(0.25..0.75);
        let s = rng.gen_range(3.0..6.0) * h;
        let m = rng.gen_range(0.5..1.5);
        let b = gaussian_blob(grid, &[c], s, m)?;
        values.iter_mut().zip(b.values()).for_each(|(v, b)| *v += b);
    }
    GridMeasure::new(grid.clone(), values)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn closed_form(ctx: &mut Ctx) {
    ctx.case("dirac_transport", |_| {
        let (d2, geo) = dirac_distance(&DiracPairProblem::new(1.0, 1.0, FRAC_PI_2)?)?;
        let err = (d2 - (8.0 - 4.0 * 2f64.sqrt())).abs();
        Ok((err <= 1e-12 && geo.strategy == Strategy::Transport, format!("d2 {d2:.17e}, error {err:.3e}")))
    });
    ctx.case("dirac_stationary", |_| {
        let (d2, geo) = dirac_distance(&DiracPairProblem::new(1.0, 1.0, 4.0)?)?;
        Ok((d2 == 8.0 && geo.strategy == Strategy::Stationary, format!("d2 {d2:.17e}, {:?}", geo.strategy)))
    });
    ctx.case("threshold_continuity", |_| {
        let (at, geo) = dirac_distance(&DiracPairProblem::new(0.7, 1.9, PI)?)?;
        let (left, _) = dirac_distance(&DiracPairProblem::new(0.7, 1.9, PI - 1e-9)?)?;
        let (right, _) = dirac_distance(&DiracPairProblem::new(0.7, 1.9, PI + 1e-9)?)?;
        let exact = 4.0 * (0.7 + 1.9);
        let ok = at == exact && right == exact && (left - exact).abs() <= 1e-8 && geo.strategy == Strategy::Mixed;
        Ok((ok, format!("left {left:.17e}, at {at:.17e}, right {right:.17e}")))
    });
    ctx.case("distance_to_zero", |_| {
        let (d2, _) = dirac_distance(&DiracPairProblem::new(2.5, 0.0, 1.0)?)?;
        let d = dist_to_zero(2.5);
        Ok(((d * d - 10.0).abs() <= 1e-12 && (d2 - 10.0).abs() <= 1e-12, format!("d {d:.17e}")))
    });
    ctx.case("proportional", |_| {
        let d = dist_proportional(3.0, 0.25);
        let (d2, _) = dirac_distance(&DiracPairProblem::new(3.0, 0.75, 0.0)?)?;
        let exact = 3f64.sqrt();
        Ok(((d - exact).abs() <= 1e-12 && (d2 - exact * exact).abs() <= 1e-12, format!("d {d:.17e}")))
    });
    ctx.case("small_separation_gap", |_| {
        let scaled: Vec<f64> = [0.2, 0.4].iter().map(|xi: &f64| w2_vs_d_gap(*xi) * 48.0 / xi.powi(4)).collect();
        let ok = scaled.iter().all(|v| (0.7..=1.3).contains(v));
        Ok((ok, format!("48(W2²−d²)/ξ⁴ = {:.6} at 0.2, {:.6} at 0.4", scaled[0], scaled[1])))
    });
}

fn metric_axioms(ctx: &mut Ctx) {
    let grid = ctx.grid();
    let opts = ctx.solver();
    for k in 0..ctx.count(10, 3) {
        ctx.case(format!("triple_{k}"), |rng| {
            let a = random_blobs(&grid, rng)?;
            let b = random_blobs(&grid, rng)?;
            let c = random_blobs(&grid, rng)?;
            let eps = solver_tolerance(&[a.mass(), b.mass(), c.mass()]);
            let ab = distance(&a, &b, &opts)?;
            let ba = distance(&b, &a, &opts)?;
            let bc = distance(&b, &c, &opts)?;
            let ac = distance(&a, &c, &opts)?;
            let sym = (ab - ba).abs();
            let tri = ac - ab - bc;
            Ok((
                sym <= 2.0 * eps && tri <= 3.0 * eps,
                format!("|d(a,b)−d(b,a)| {sym:.6e}, d(a,c)−d(a,b)−d(b,c) {tri:.6e}, eps {eps:.6e}"),
            ))
        });
    }
}

fn scaling(ctx: &mut Ctx) {
    let grid = ctx.grid();
    let opts = ctx.solver();
    let h = grid.spacing[0];
    for lambda in [4.0, 0.25, 0.0] {
        ctx.case(format!("blob_to_{lambda}_blob"), |_| {
            let rho = gaussian_blob(&grid, &[0.5], 2.0 * h, 1.0)?;
            let target = dist_proportional(1.0, lambda).powi(2);
            let d2 = solve_distance(&rho, &rho.scaled(lambda)?, &opts)?.0.d2;
            let err = relative(d2, target);
            Ok((err <= 0.05, format!("d2 {d2:.6e}, target {target:.6e}, relative error {err:.3e}")))
        });
    }
    ctx.case("closed_form_homogeneity", |rng| {
        let (k0, k1, xi) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0), rng.gen_range(0.0..2.0 * PI));
        let alpha = rng.gen_range(0.1..5.0);
        let (d2, _) = dirac_distance(&DiracPairProblem::new(k0, k1, xi)?)?;
        let (d2a, _) = dirac_distance(&DiracPairProblem::new(alpha * k0, alpha * k1, xi)?)?;
        let err = relative(d2a, alpha * d2);
        Ok((err <= 1e-12, format!("relative error {err:.3e}")))
    });
}

fn w2_bound(ctx: &mut Ctx) {
    let grid = ctx.grid();
    let opts = ctx.solver();
    for k in 0..ctx.count(10, 3) {
        ctx.case(format!("pair_{k}"), |rng| {
            let a = random_blobs(&grid, rng)?;
            let b = random_blobs(&grid, rng)?;
            let (a, b) = (a.scaled(1.0 / a.mass())?, b.scaled(1.0 / b.mass())?);
            let w2 = wasserstein2_1d(&a, &b)?;
            let d = distance(&a, &b, &opts)?;
            let eps = solver_tolerance(&[1.0]);
            Ok((d <= w2 + eps, format!("d {d:.6e}, W2 {w2:.6e}, eps {eps:.6e}")))
        });
    }
}

fn bl_bound(ctx: &mut Ctx) {
    let grid = ctx.grid();
    let opts = ctx.solver();
    for k in 0..ctx.count(6, 2) {
        ctx.case(format!("pair_{k}"), |rng| {
            let a = random_blobs(&grid, rng)?;
            let b = random_blobs(&grid, rng)?;
            let d = distance(&a, &b, &opts)?;
            let bl = bounded_lipschitz(&a, &b, 1e-6)?.lower_bound;
            let bound = 6.0 * (a.mass() + b.mass()).sqrt() * d + 1e-6;
            Ok((bl <= bound, format!("d_BL ≥ {bl:.6e}, 6√(m0+m1)·d {bound:.6e}")))
        });
    }
}

fn constant_speed(ctx: &mut Ctx) {
    let grid = ctx.grid();
    let opts = ctx.solver();
    let h = grid.spacing[0];
    let cases: [(&str, f64, f64); 2] = [("growth", 0.5, 4.0), ("shift", 0.6, 1.0)];
    for (name, c1, m1) in cases {
        ctx.case(name, |_| {
            let a = gaussian_blob(&grid, &[0.4], 4.0 * h, 1.0)?;
            let b = gaussian_blob(&grid, &[c1], 4.0 * h, m1)?;
            let (report, path) = solve_distance(&a, &b, &opts)?;
            let re = path.reparametrize_arclength()?;
            let speeds = re.speeds()?;
            let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
            let sd = (speeds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / speeds.len() as f64).sqrt();
            let cv = sd / mean;
            let (e0, e1) = (path.total_energy(), re.total_energy());
            Ok((
                report.converged && cv <= 0.02 && e1 <= e0 * (1.0 + 1e-12),
                format!("converged {}, speed cv {cv:.3e}, energy {e0:.6e} → {e1:.6e}", report.converged),
            ))
        });
    }
}

fn trajectories(ctx: &mut Ctx) {
    let problems = [(1.0, 1.0, FRAC_PI_2), (0.5, 2.0, 2.0), (3.0, 1.0, 0.3)];
    for (k0, k1, xi) in problems {
        ctx.case(format!("dirac_{k0}_{k1}_{xi:.4}"), |_| {
            let (d2, geo) = dirac_distance(&DiracPairProblem::new(k0, k1, xi)?)?;
            let traj = integrate_free_particles(&[FreeParticle::from_dirac(&geo)?], 1.0, 1e-3)?;
            let mut err: f64 = 0.0;
            let mut residual: f64 = 0.0;
            for (t, frame) in traj.times.iter().zip(&traj.frames) {
                let (k, s) = geo.eval(t.min(1.0))?;
                err = err.max((frame[0].k - k).abs()).max((frame[0].x[0] - s).abs());
                let (r1, r2) = euler_lagrange_residual(&geo, t.min(1.0))?;
                residual = residual.max(r1.abs()).max(r2.abs());
            }
            let energy_err = (particle_energy(&traj).1 - d2).abs();
            Ok((
                err <= 1e-8 && residual <= 1e-10 && energy_err <= 1e-6,
                format!("trajectory error {err:.3e}, EL residual {residual:.3e}, energy error {energy_err:.3e}"),
            ))
        });
    }
}

/// Least-squares slope of `log err` against `log dt`.
pub fn loglog_slope(dts: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

pub const REFINEMENT_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Metric-speed drift of the geodesic evolution for each step in [`REFINEMENT_STEPS`].
pub fn speed_drift_study() -> Result<Vec<f64>> {
    let g = Grid::interval(64, 0.0, PI)?;
    let rho = GridMeasure::from_fn(g.clone(), |x| 1.0 + 0.5 * x[0].cos())?;
    let pot = PotentialField::from_fn(g, |x| 0.5 * (2.0 * x[0]).cos())?;
    REFINEMENT_STEPS.iter().map(|&dt| speed_drift(&rho, &pot, 0.4, dt)).collect()
}

/// Direction deviation on `[0,π]²` with the spacing refined alongside the step
/// (`h = 4dt`), for each step in [`REFINEMENT_STEPS`].
pub fn direction_study() -> Result<Vec<f64>> {
    REFINEMENT_STEPS
        .iter()
        .map(|&dt| {
            let n = (PI / (4.0 * dt)).round() as usize;
            let g = Grid::rectangle(n, n, (0.0, 0.0), (PI, PI))?;
            let rho = GridMeasure::from_fn(g.clone(), |x| (-((x[0] - 1.3).powi(2) + (x[1] - 1.7).powi(2)) * 4.0).exp())?;
            let pot = PotentialField::from_fn(g, |x| x[0].cos() + 0.5 * x[1].cos() + 0.3 * x[0].cos() * (2.0 * x[1]).cos())?;
            Ok(direction_invariance_check(&rho, &pot, 0.5, dt)?.max_deviation)
        })
        .collect()
}

fn hj(ctx: &mut Ctx) {
    ctx.case("metric_speed_drift", |_| {
        let drift = speed_drift_study()?;
        let slope = loglog_slope(&REFINEMENT_STEPS, &drift);
        Ok((slope >= 1.8, format!("drift {}, slope {slope:.3}", sci(&drift))))
    });
    ctx.case("direction_invariance", |_| {
        let dev = direction_study()?;
        let slope = loglog_slope(&REFINEMENT_STEPS, &dev);
        Ok((slope >= 1.8, format!("deviation {}, slope {slope:.3}", sci(&dev))))
    });
}

/// Smooth 1D data for the Hessian check: `ρ = 1 + 0.3cos(πx)`, `u = ½cos(2πx)`
/// on `[0,1]`, compatible with the no-flux walls.
pub fn hessian_test_data(n: usize) -> Result<(GridMeasure, PotentialField)> {
    let g = Grid::interval(n, 0.0, 1.0)?;
    let rho = GridMeasure::from_fn(g.clone(), |x| 1.0 + 0.3 * (PI * x[0]).cos())?;
    let pot = PotentialField::from_fn(g, |x| 0.5 * (2.0 * PI * x[0]).cos())?;
    Ok((rho, pot))
}

fn hessian(ctx: &mut Ctx) {
    for spec in InternalEnergySpec::PRESETS {
        ctx.case(spec.name, |_| {
            let (rho, pot) = hessian_test_data(400)?;
            let r = hessian_report(&rho, &pot, &spec, 2e-4)?;
            Ok((r.rel_err <= 0.03, format!("formula {:.6e}, oracle {:.6e}, relative error {:.3e}", r.formula_value, r.fd_value, r.rel_err)))
        });
    }
}

fn flow(ctx: &mut Ctx) {
    ctx.case("logistic", |_| {
        let g = Grid::interval(8, 0.0, 1.0)?;
        let m = GridMeasure::from_fn(g.clone(), |_| 1.0)?;
        let rho0 = GridMeasure::from_fn(g, |_| 0.5)?;
        let trace = run_flow(&PopulationProblem::new(m, rho0, 1.0, 1e-4)?)?;
        let exact = 1f64.exp() / (1f64.exp() + 1.0);
        let err = trace.final_state.values().iter().map(|v| (v - exact).abs()).fold(0.0, f64::max);
        Ok((err <= 1e-4, format!("max error {err:.3e}")))
    });
    ctx.case("dissipation_residual_order", |_| {
        let g = Grid::interval(24, 0.0, 1.0)?;
        let m = GridMeasure::from_fn(g.clone(), |x| 1.0 + 0.3 * (3.0 * x[0]).cos())?;
        let rho0 = GridMeasure::from_fn(g, |x| 0.5 + 0.4 * (2.0 * x[0]).sin())?;
        let res = [4e-4, 2e-4, 1e-4]
            .iter()
            .map(|&dt| Ok(run_flow(&PopulationProblem::new(m.clone(), rho0.clone(), 0.2, dt)?)?.max_dissipation_residual))
            .collect::<Result<Vec<f64>>>()?;
        let slope = loglog_slope(&[4e-4, 2e-4, 1e-4], &res);
        Ok(((slope - 1.0).abs() <= 0.2, format!("residuals {}, slope {slope:.3}", sci(&res))))
    });
    let seed = ctx.opts.seed;
    let g = Grid::interval(if ctx.opts.fast { 24 } else { 48 }, 0.0, 1.0).expect("valid grid");
    let h = g.spacing[0];
    let cert = estimate_beckner_constant(&g, ctx.count(200, 50), seed);
    for k in 0..ctx.count(5, 2) {
        ctx.case(format!("exponential_decay_{k}"), |rng| {
            let cert = cert.as_ref().map_err(|e| Error::InvalidInput(e.to_string()))?;
            let m_min = rng.gen_range(0.2..1.0);
            let m = random_field(&g, rng, m_min)?;
            let rho0 = random_field(&g, rng, 0.1)?;
            let rho0 = rho0.scaled(rng.gen_range(0.2..2.0) / rho0.mass())?;
            let dt = 0.1 * h * h / rho0.max().max(m.max());
            let prob = PopulationProblem { sample_every: 50, ..PopulationProblem::new(m, rho0, 2.0, dt)? };
            let trace = run_flow(&prob)?;
            let gamma = cert.phi(prob.c0());
            let margin = trace.decay_margin(gamma);
            Ok((
                margin >= 0.0,
                format!(
                    "Φ(c0) {gamma:.6e}, fitted rate {:.6e}, log margin {margin:.3e}",
                    trace.fitted_rate().unwrap_or(f64::NAN)
                ),
            ))
        });
    }
}

fn beckner(ctx: &mut Ctx) {
    let g = Grid::interval(if ctx.opts.fast { 32 } else { 64 }, 0.0, 1.0).expect("valid grid");
    let seed = ctx.opts.seed;
    let trials = ctx.count(200, 50);
    ctx.case("fresh_pairs", |_| {
        let cert = estimate_beckner_constant(&g, trials, seed)?;
        let checked = cert.validate(&g, 200, seed.wrapping_add(1))?;
        Ok((
            checked.min_margin >= 0.0,
            format!("C_Omega {:.6e}, {} pairs, min margin {:.3e}", checked.c_omega, checked.samples_checked, checked.min_margin),
        ))
    });
    ctx.case("phi_shape", |_| {
        let cert = estimate_beckner_constant(&g, trials.min(20), seed)?;
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 * 5e-3).collect();
        let increasing = grid.windows(2).all(|w| cert.phi(w[1]) > cert.phi(w[0]));
        Ok((cert.phi(0.0) == 0.0 && increasing, format!("Φ(0) {}, increasing {increasing}", cert.phi(0.0))))
    });
}

fn sci(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" ")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// JUnit-style XML; contains no timestamps or durations.
pub fn junit_xml(results: &[SuiteResult]) -> String {
    let tests: usize = results.iter().map(|s| s.cases.len()).sum();
    let failures: usize = results.iter().map(SuiteResult::failures).sum();
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<testsuites name=\"wfr verify\" tests=\"{tests}\" failures=\"{failures}\">");
    for s in results {
        let _ = writeln!(
            out,
            "  <testsuite name=\"{}\" tests=\"{}\" failures=\"{}\">",
            escape(&s.name),
            s.cases.len(),
            s.failures()
        );
        for c in &s.cases {
            let _ = writeln!(out, "    <testcase classname=\"{}\" name=\"{}\">", escape(&s.name), escape(&c.name));
            if !c.passed {
                let _ = writeln!(out, "      <failure message=\"{}\"/>", escape(&c.detail));
            }
            let _ = writeln!(out, "      <system-out>{}</system-out>", escape(&c.detail));
            let _ = writeln!(out, "    </testcase>");
        }
        let _ = writeln!(out, "  </testsuite>");
    }
    out.push_str("</testsuites>\n");
    out
}
