//! Fitness-driven population model `∂ₜρ = div(ρ∇(ρ−m)) + ρ(m−ρ)` with no-flux
//! walls, seen as the gradient flow of `𝓔(ρ) = ½∫|ρ−m|²`.
//!
//! Fluxes `ρ_up D_h(ρ−m)` live on interior faces, with the density taken from
//! the cell the mass leaves; boundary faces carry no flux. Outflow from a cell
//! is then proportional to its own density, which keeps explicit steps
//! nonnegative under [`stability_bound`]. The arithmetic face mean does not:
//! where the exact solution nearly vanishes next to steep resources it drains
//! a cell through its neighbour's density.

mod beckner;

use std::io::Write;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::{entropy, GridMeasure};

pub use beckner::{estimate_beckner_constant, random_field, BecknerCertificate, SAFETY_FACTOR};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationProblem {
    /// Resources, strictly positive.
    pub m: GridMeasure,
    pub rho0: GridMeasure,
    pub t_end: f64,
    pub dt: f64,
    /// Steps between recorded samples.
    #[serde(default = "one")]
    pub sample_every: usize,
}

fn one() -> usize {
    1
}

impl PopulationProblem {
    pub fn new(m: GridMeasure, rho0: GridMeasure, t_end: f64, dt: f64) -> Result<Self> {
        let p = Self { m, rho0, t_end, dt, sample_every: 1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.m.grid().check_same(self.rho0.grid())?;
        if !(self.m.min() > 0.0) {
            return Err(Error::InvalidInput(format!("resources must be positive, min is {}", self.m.min())));
        }
        if !(self.rho0.mass() > 0.0) {
            return Err(Error::ZeroMass);
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() || !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidInput(format!("need dt > 0 and t_end ≥ 0, got {} and {}", self.dt, self.t_end)));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidInput("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    /// `c₀ = ∫ min{ρ₀, m}`, the mass floor along the flow.
    pub fn c0(&self) -> f64 {
        let s: f64 = self.rho0.values().iter().zip(self.m.values()).map(|(r, m)| r.min(*m)).sum();
        s * self.m.grid().cell_volume()
    }
}

/// Upwind mobility on the interior faces along `axis`: mass moves down `φ`, so
/// a face takes the density of whichever neighbour has the larger `φ`.
fn upwind_mobility(grid: &Grid, rho: &[f64], phi: &[f64], axis: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.face_count(axis));
    grid.for_each_line(axis, |first, stride, n| {
        for i in 0..n.saturating_sub(1) {
            let (l, r) = (first + i * stride, first + (i + 1) * stride);
            out.push(if phi[r] > phi[l] { rho[r] } else { rho[l] });
        }
    });
    out
}

/// `ρ_up · D_h φ` on the interior faces of each axis.
fn face_fluxes(grid: &Grid, rho: &[f64], phi: &[f64]) -> Vec<Vec<f64>> {
    (0..grid.dim())
        .map(|a| {
            let mob = upwind_mobility(grid, rho, phi, a);
            let diff = grid.face_diff(phi, a);
            mob.iter().zip(&diff).map(|(r, d)| r * d).collect()
        })
        .collect()
}

/// `div_h F = −D_hᵀ F` with zero flux through the walls.
fn face_divergence(grid: &Grid, fluxes: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (a, f) in fluxes.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(grid.face_diff_adjoint(f, a)) {
            *o -= v;
        }
    }
    out
}

/// `Σ_faces ρ_face |D_h φ|² · vol` with the arithmetic face mean.
pub(crate) fn weighted_face_energy(grid: &Grid, rho: &[f64], phi: &[f64]) -> f64 {
    let mut sum = 0.0;
    for a in 0..grid.dim() {
        let mean = grid.face_mean(rho, a);
        let diff = grid.face_diff(phi, a);
        sum += mean.iter().zip(&diff).map(|(r, d)| r * d * d).sum::<f64>();
    }
    sum * grid.cell_volume()
}

/// `Σ_faces ρ_up |D_h φ|² · vol`.
fn upwind_face_energy(grid: &Grid, rho: &[f64], phi: &[f64]) -> f64 {
    let mut sum = 0.0;
    for a in 0..grid.dim() {
        let mob = upwind_mobility(grid, rho, phi, a);
        let diff = grid.face_diff(phi, a);
        sum += mob.iter().zip(&diff).map(|(r, d)| r * d * d).sum::<f64>();
    }
    sum * grid.cell_volume()
}

fn fitness(rho: &GridMeasure, m: &GridMeasure) -> Vec<f64> {
    rho.values().iter().zip(m.values()).map(|(r, m)| r - m).collect()
}

/// Discrete right-hand side `div_h(ρ_up D_h(ρ−m)) + ρ(m−ρ)`.
pub fn flow_rhs(rho: &GridMeasure, m: &GridMeasure) -> Result<Vec<f64>> {
    let grid = rho.grid();
    grid.check_same(m.grid())?;
    let phi = fitness(rho, m);
    let mut out = face_divergence(grid, &face_fluxes(grid, rho.values(), &phi));
    for ((o, r), p) in out.iter_mut().zip(rho.values()).zip(&phi) {
        *o -= r * p;
    }
    Ok(out)
}

/// Largest admissible explicit step: the parabolic bound `¼ h²/max ρ`,
/// tightened where needed so that every cell keeps a nonnegative share of its
/// own mass, `dt · (Σ_faces (φᵢ−φⱼ)⁺/h² + φᵢ⁺) ≤ 1`.
pub fn stability_bound(rho: &GridMeasure, m: &GridMeasure) -> Result<f64> {
    let grid = rho.grid();
    grid.check_same(m.grid())?;
    let h = grid.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let parabolic = 0.25 * h * h / rho.max().max(f64::MIN_POSITIVE);
    let phi = fitness(rho, m);
    let mut rate: Vec<f64> = phi.iter().map(|p| p.max(0.0)).collect();
    for a in 0..grid.dim() {
        let h2 = grid.spacing[a] * grid.spacing[a];
        grid.for_each_line(a, |first, stride, n| {
            for i in 0..n.saturating_sub(1) {
                let (l, r) = (first + i * stride, first + (i + 1) * stride);
                let drop = (phi[l] - phi[r]) / h2;
                if drop > 0.0 {
                    rate[l] += drop;
                } else {
                    rate[r] -= drop;
                }
            }
        });
    }
    let fastest = rate.into_iter().fold(0.0, f64::max);
    Ok(if fastest > 0.0 { parabolic.min(1.0 / fastest) } else { parabolic })
}

/// One forward Euler step of the finite-volume scheme.
pub fn step_flow(state: &GridMeasure, prob: &PopulationProblem) -> Result<GridMeasure> {
    step(state, &prob.m, prob.dt)
}

fn step(state: &GridMeasure, m: &GridMeasure, dt: f64) -> Result<GridMeasure> {
    let bound = stability_bound(state, m)?;
    if dt > bound {
        return Err(Error::StepTooLarge { dt, bound });
    }
    let rhs = flow_rhs(state, m)?;
    let next: Vec<f64> = state.values().iter().zip(&rhs).map(|(r, d)| r + dt * d).collect();
    // a negative cell means the step was too large for this state
    GridMeasure::new(state.grid().clone(), next)
}

/// `𝓓(ρ) = Σ_faces ρ_up|D_h(ρ−m)|² vol + Σ ρ|ρ−m|² vol`.
pub fn dissipation(rho: &GridMeasure, m: &GridMeasure) -> Result<f64> {
    let grid = rho.grid();
    grid.check_same(m.grid())?;
    let phi = fitness(rho, m);
    let reaction: f64 = rho.values().iter().zip(&phi).map(|(r, p)| r * p * p).sum::<f64>() * grid.cell_volume();
    Ok(upwind_face_energy(grid, rho.values(), &phi) + reaction)
}

/// Discrete `grad_d 𝓔(ρ) = −div_h(ρ_up D_h φ) + ρφ` with `φ = δ𝓔/δρ = ρ − m`.
pub fn entropy_gradient(rho: &GridMeasure, m: &GridMeasure) -> Result<Vec<f64>> {
    let grid = rho.grid();
    grid.check_same(m.grid())?;
    let phi = fitness(rho, m);
    let mut out: Vec<f64> = face_divergence(grid, &face_fluxes(grid, rho.values(), &phi)).iter().map(|v| -v).collect();
    for ((o, r), p) in out.iter_mut().zip(rho.values()).zip(&phi) {
        *o += r * p;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientIdentity {
    /// `‖rhs + grad_d𝓔‖ / max(‖rhs‖, ‖grad_d𝓔‖)`.
    pub rhs_mismatch: f64,
    /// `|⟨grad_d𝓔, φ⟩ − 𝓓| / 𝓓`: the tangent norm of the gradient is the dissipation.
    pub norm_mismatch: f64,
}

/// Checks that the scheme's right-hand side is `−grad_d𝓔` and that
/// `‖grad_d𝓔‖²_{T_ρ} = ⟨grad_d𝓔, δ𝓔/δρ⟩ = 𝓓(ρ)`.
pub fn verify_gradient_identity(rho: &GridMeasure, m: &GridMeasure) -> Result<GradientIdentity> {
    let rhs = flow_rhs(rho, m)?;
    let grad = entropy_gradient(rho, m)?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = rhs.iter().zip(&grad).map(|(a, b)| a + b).collect();
    let scale = norm(&rhs).max(norm(&grad));
    let rhs_mismatch = if scale == 0.0 { 0.0 } else { norm(&diff) / scale };

    let phi = fitness(rho, m);
    let pairing: f64 = grad.iter().zip(&phi).map(|(g, p)| g * p).sum::<f64>() * rho.grid().cell_volume();
    let d = dissipation(rho, m)?;
    let norm_mismatch = if d == 0.0 { pairing.abs() } else { (pairing - d).abs() / d };
    Ok(GradientIdentity { rhs_mismatch, norm_mismatch })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub entropy: f64,
    pub dissipation: f64,
    pub mass: f64,
    pub l2_error: f64,
    pub min_rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub samples: Vec<FlowSample>,
    pub steps: usize,
    /// `max_k |(𝓔_{k+1} − 𝓔_k)/dt + (𝓓_k + 𝓓_{k+1})/2|` over all steps.
    pub max_dissipation_residual: f64,
    pub final_state: GridMeasure,
}

impl FlowTrace {
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,entropy,dissipation,mass,l2_error,min_rho")?;
        for s in &self.samples {
            writeln!(
                out,
                "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                s.t, s.entropy, s.dissipation, s.mass, s.l2_error, s.min_rho
            )?;
        }
        Ok(())
    }

    /// Least-squares slope `γ` of `log 𝓔 ≈ c − 2γt` over samples with `𝓔 > 0`.
    pub fn fitted_rate(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.samples.iter().filter(|s| s.entropy > 0.0).map(|s| (s.t, s.entropy.ln())).collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        (var > 0.0).then(|| -cov / var / 2.0)
    }

    /// Smallest `log(e^{−2γt}𝓔(0)) − log 𝓔(t)` over the samples; nonnegative
    /// when the exponential bound holds everywhere.
    pub fn decay_margin(&self, gamma: f64) -> f64 {
        let e0 = self.samples.first().map_or(0.0, |s| s.entropy);
        if e0 == 0.0 {
            return 0.0;
        }
        self.samples
            .iter()
            .map(|s| if s.entropy <= 0.0 { f64::INFINITY } else { (e0.ln() - 2.0 * gamma * s.t) - s.entropy.ln() })
            .fold(f64::INFINITY, f64::min)
    }
}

fn sample(t: f64, rho: &GridMeasure, m: &GridMeasure) -> Result<FlowSample> {
    let e = entropy(rho, m)?;
    Ok(FlowSample {
        t,
        entropy: e,
        dissipation: dissipation(rho, m)?,
        mass: rho.mass(),
        l2_error: (2.0 * e).sqrt(),
        min_rho: rho.min(),
    })
}

/// Integrates to `t_end` with steps of `dt` (the last one shortened to land on
/// `t_end`), sampling every `sample_every` steps and at the end.
pub fn run_flow(prob: &PopulationProblem) -> Result<FlowTrace> {
    prob.validate()?;
    let m = &prob.m;
    let n = ((prob.t_end / prob.dt) - 1e-9).ceil().max(0.0) as usize;
    let mut rho = prob.rho0.clone();
    let mut t = 0.0;
    let mut e_prev = entropy(&rho, m)?;
    let mut d_prev = dissipation(&rho, m)?;
    let mut samples = vec![sample(0.0, &rho, m)?];
    let mut residual: f64 = 0.0;
    for k in 0..n {
        let dt = if k + 1 == n { prob.t_end - t } else { prob.dt };
        rho = step(&rho, m, dt)?;
        t = if k + 1 == n { prob.t_end } else { (k + 1) as f64 * prob.dt };
        let e = entropy(&rho, m)?;
        let d = dissipation(&rho, m)?;
        if dt > 0.0 {
            residual = residual.max(((e - e_prev) / dt + 0.5 * (d + d_prev)).abs());
        }
        e_prev = e;
        d_prev = d;
        if (k + 1) % prob.sample_every == 0 || k + 1 == n {
            samples.push(sample(t, &rho, m)?);
        }
    }
    debug!("flow finished after {n} steps, dissipation residual {residual:.3e}");
    Ok(FlowTrace { samples, steps: n, max_dissipation_residual: residual, final_state: rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Grid {
        Grid::interval(n, 0.0, 1.0).unwrap()
    }

    fn constant(g: &Grid, v: f64) -> GridMeasure {
        GridMeasure::from_fn(g.clone(), |_| v).unwrap()
    }

    #[test]
    fn ideal_free_distribution_is_stationary() {
        let g = unit(32);
        let m = GridMeasure::from_fn(g.clone(), |x| 1.0 + 0.5 * (3.0 * x[0]).sin()).unwrap();
        let p = PopulationProblem::new(m.clone(), m.clone(), 0.1, 1e-4).unwrap();
        assert_eq!(step_flow(&m, &p).unwrap(), m);
        let trace = run_flow(&p).unwrap();
        assert!(trace.samples.iter().all(|s| s.entropy == 0.0 && s.dissipation == 0.0));
    }

    #[test]
    fn spatially_constant_data_follow_logistic_curve() {
        let g = unit(16);
        let p = PopulationProblem::new(constant(&g, 1.0), constant(&g, 0.5), 1.0, 1e-4).unwrap();
        let trace = run_flow(&p).unwrap();
        let exact = 1.0f64.exp() / (1.0f64.exp() + 1.0);
        for v in trace.final_state.values() {
            assert!((v - exact).abs() < 1e-4);
        }
        let e_exact = 0.5 / (1.0f64.exp() + 1.0).powi(2);
        let e = trace.samples.last().unwrap().entropy;
        assert!((e - e_exact).abs() < 1e-3 * e_exact);
    }

    #[test]
    fn constant_dissipation() {
        let g = unit(10);
        assert!((dissipation(&constant(&g, 2.0), &constant(&g, 1.0)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Grid::rectangle(12, 9, (0.0, 0.0), (1.0, 0.7)).unwrap();
        let rho = random_field(&g, &mut rng, 0.1).unwrap();
        let m = random_field(&g, &mut rng, 0.2).unwrap();
        let id = verify_gradient_identity(&rho, &m).unwrap();
        assert!(id.rhs_mismatch <= 1e-12 && id.norm_mismatch <= 1e-12, "{id:?}");
        let zero = verify_gradient_identity(&m, &m).unwrap();
        assert_eq!(zero.rhs_mismatch, 0.0);
    }

    #[test]
    fn stays_below_resources() {
        let g = unit(40);
        let m = GridMeasure::from_fn(g.clone(), |x| 1.0 + 0.4 * (4.0 * x[0]).cos()).unwrap();
        let rho0 = GridMeasure::from_fn(g.clone(), |x| 0.3 * (1.0 + 0.4 * (4.0 * x[0]).cos()) * x[0]).unwrap();
        let p = PopulationProblem { sample_every: 50, ..PopulationProblem::new(m.clone(), rho0, 1.0, 1e-4).unwrap() };
        let trace = run_flow(&p).unwrap();
        assert!(trace.final_state.values().iter().zip(m.values()).all(|(r, m)| *r <= *m));
        assert!(trace.samples.iter().all(|s| s.mass >= p.c0() - 1e-12));
        for w in trace.samples.windows(2) {
            assert!(w[1].entropy <= w[0].entropy + 1e-12);
        }
    }

    #[test]
    fn nearly_empty_cells_stay_nonnegative() {
        // resources convex at the wall push a thin population into the interior
        let g = unit(48);
        let m = GridMeasure::from_fn(g.clone(), |x| 0.5 + 2.0 * (x[0] - 0.6).powi(2) * 4.0).unwrap();
        let rho0 = GridMeasure::from_fn(g.clone(), |x| 0.02 + 0.4 * (-(x[0] - 0.1).powi(2) * 200.0).exp()).unwrap();
        let dt = 0.1 / (48.0 * 48.0 * m.max().max(rho0.max()));
        let p = PopulationProblem { sample_every: 100, ..PopulationProblem::new(m, rho0, 1.0, dt).unwrap() };
        let trace = run_flow(&p).unwrap();
        assert!(trace.samples.iter().all(|s| s.min_rho >= 0.0));
    }

    #[test]
    fn dissipation_residual_is_first_order() {
        let g = unit(24);
        let m = GridMeasure::from_fn(g.clone(), |x| 1.0 + 0.3 * (3.0 * x[0]).cos()).unwrap();
        let rho0 = GridMeasure::from_fn(g.clone(), |x| 0.5 + 0.4 * (2.0 * x[0]).sin()).unwrap();
        let run = |dt: f64| {
            run_flow(&PopulationProblem::new(m.clone(), rho0.clone(), 0.2, dt).unwrap()).unwrap().max_dissipation_residual
        };
        let ratio = run(2e-4) / run(1e-4);
        assert!((ratio.log2() - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn unstable_step_is_rejected() {
        let g = unit(100);
        let p = PopulationProblem::new(constant(&g, 1.0), constant(&g, 2.0), 1.0, 1e-3).unwrap();
        assert!(matches!(step_flow(&p.rho0, &p), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn csv_header() {
        let g = unit(4);
        let p = PopulationProblem::new(constant(&g, 1.0), constant(&g, 0.5), 0.02, 0.01).unwrap();
        let mut buf = Vec::new();
        run_flow(&p).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,entropy,dissipation,mass,l2_error,min_rho\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn invalid_problems() {
        let g = unit(4);
        assert!(PopulationProblem::new(constant(&g, 0.0), constant(&g, 1.0), 1.0, 0.1).is_err());
        assert!(matches!(PopulationProblem::new(constant(&g, 1.0), constant(&g, 0.0), 1.0, 0.1), Err(Error::ZeroMass)));
        let other = unit(5);
        assert!(PopulationProblem::new(constant(&g, 1.0), constant(&other, 1.0), 1.0, 0.1).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn admissible_steps_stay_nonnegative(seed in 0u64..10_000, n in 4usize..40, floor in 1e-4f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = unit(n);
            let rho = random_field(&g, &mut rng, floor).unwrap();
            let m = random_field(&g, &mut rng, 0.2).unwrap();
            let dt = stability_bound(&rho, &m).unwrap();
            let next = step(&rho, &m, dt).unwrap();
            proptest::prop_assert!(next.min() >= 0.0);
            // fluxes only move mass around; the change is the reaction term
            let reaction: f64 = rho.values().iter().zip(m.values()).map(|(r, m)| r * (m - r)).sum();
            proptest::prop_assert!((next.mass() - rho.mass() - dt * reaction * g.cell_volume()).abs() < 1e-10);
        }

        #[test]
        fn scheme_is_the_negative_gradient(seed in 0u64..10_000, nx in 2usize..12, ny in 2usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::rectangle(nx, ny, (0.0, 0.0), (1.0, 1.3)).unwrap();
            let rho = random_field(&g, &mut rng, 0.05).unwrap();
            let m = random_field(&g, &mut rng, 0.2).unwrap();
            let id = verify_gradient_identity(&rho, &m).unwrap();
            proptest::prop_assert!(id.rhs_mismatch <= 1e-12 && id.norm_mismatch <= 1e-12);
        }
    }
}
