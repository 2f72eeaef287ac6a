//! Discrete dynamic formulation of the distance: minimize the path energy in
//! the convex variables `(ρ, w = ρ∇u, s = ρu)` subject to the discrete
//! continuity equation with source, by a first-order primal–dual method.

mod path;
mod projection;
mod prox;

pub use path::{PathDiagnostics, SpaceTimePath};
pub use projection::{ContinuityProjector, Preconditioner, Staggered};
pub use prox::prox_energy;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::{GridMeasure, Layout, PotentialField};

/// Solver settings; this is also the JSON options file schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Number of time intervals.
    pub nt: usize,
    pub max_iter: usize,
    /// Relative distance between the feasible iterate and the energy point.
    pub tol_feas: f64,
    /// Relative change of the objective between two checks.
    pub tol_gap: f64,
    /// Width of rasterized atoms, in grid spacings.
    pub sigma_blob: f64,
    /// Primal over dual step ratio; not part of the options file.
    #[serde(skip)]
    pub step_ratio: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { nt: 32, max_iter: 10_000, tol_feas: 1e-3, tol_gap: 1e-5, sigma_blob: 2.0, step_ratio: STEP_RATIO }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.nt < 2 {
            return Err(Error::InvalidInput(format!("nt must be at least 2, got {}", self.nt)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        for (name, v) in [
            ("tol_feas", self.tol_feas),
            ("tol_gap", self.tol_gap),
            ("sigma_blob", self.sigma_blob),
            ("step_ratio", self.step_ratio),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverReport {
    /// Converged objective `∫∫(|∇u|²+u²)dρ dt`.
    pub d2: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative distance between the interpolated feasible iterate and the
    /// point at which the energy is evaluated.
    pub primal_residual: f64,
    /// Relative change of the objective over the last check interval.
    pub dual_residual: f64,
    /// `‖D_tρ + div w − s‖₂` of the feasible iterate.
    pub continuity_residual: f64,
    /// Objective at every check.
    pub energy_history: Vec<f64>,
}

/// Iterations between convergence checks.
const CHECK_EVERY: usize = 25;
/// Initial primal over dual step ratio.
const STEP_RATIO: f64 = 0.1;
/// Residual balancing: first relative step change, its decay per change, the
/// imbalance that triggers a change, and the size below which it stops.
const ADAPT_START: f64 = 0.5;
const ADAPT_DECAY: f64 = 0.95;
const ADAPT_BALANCE: f64 = 1.5;
const ADAPT_FLOOR: f64 = 1e-4;

/// Centered space-time values: one entry per interval and cell; the momentum
/// components are interleaved per point.
#[derive(Clone)]
struct Centered {
    rho: Vec<f64>,
    w: Vec<f64>,
    s: Vec<f64>,
}

impl Centered {
    fn zeros(points: usize, dim: usize) -> Self {
        Self { rho: vec![0.0; points], w: vec![0.0; points * dim], s: vec![0.0; points] }
    }

    fn dist2(&self, other: &Centered) -> f64 {
        let d = |a: &[f64], b: &[f64]| crate::par::sum(a.len(), |i| (a[i] - b[i]) * (a[i] - b[i]));
        d(&self.rho, &other.rho) + d(&self.w, &other.w) + d(&self.s, &other.s)
    }

    fn norm2(&self) -> f64 {
        let d = |a: &[f64]| crate::par::sum(a.len(), |i| a[i] * a[i]);
        d(&self.rho) + d(&self.w) + d(&self.s)
    }
}

/// Averaging from the staggered unknowns to cell centers.
struct Interp<'g> {
    grid: &'g Grid,
    nt: usize,
}

impl Interp<'_> {
    fn apply(&self, v: &Staggered, out: &mut Centered) {
        let n = self.grid.len();
        let dim = self.grid.dim();
        out.rho.par_chunks_mut(n).enumerate().for_each(|(k, row)| {
            row.iter_mut().for_each(|r| *r = 0.0);
            if k > 0 {
                row.iter_mut().zip(&v.rho[(k - 1) * n..k * n]).for_each(|(r, x)| *r += 0.5 * x);
            }
            if k + 1 < self.nt {
                row.iter_mut().zip(&v.rho[k * n..(k + 1) * n]).for_each(|(r, x)| *r += 0.5 * x);
            }
        });
        out.w.par_chunks_mut(n * dim).enumerate().for_each(|(k, row)| {
            for a in 0..dim {
                let f = self.grid.face_count(a);
                let avg = self.grid.face_mean_adjoint(&v.w[a][k * f..(k + 1) * f], a);
                for (i, x) in avg.into_iter().enumerate() {
                    row[i * dim + a] = x;
                }
            }
        });
        out.s.copy_from_slice(&v.s);
    }

    fn adjoint(&self, y: &Centered, out: &mut Staggered) {
        let n = self.grid.len();
        let dim = self.grid.dim();
        out.rho.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for i in 0..n {
                row[i] = 0.5 * (y.rho[j * n + i] + y.rho[(j + 1) * n + i]);
            }
        });
        for (a, w) in out.w.iter_mut().enumerate() {
            let f = self.grid.face_count(a);
            w.par_chunks_mut(f).enumerate().for_each(|(k, chunk)| {
                let comp: Vec<f64> = (0..n).map(|i| y.w[(k * n + i) * dim + a]).collect();
                chunk.copy_from_slice(&self.grid.face_mean(&comp, a));
            });
        }
        out.s.copy_from_slice(&y.s);
    }

    /// Contribution of the fixed endpoint densities to the centered density.
    fn offset(&self, rho0: &[f64], rho1: &[f64]) -> Centered {
        let n = self.grid.len();
        let mut c = Centered::zeros(self.nt * n, self.grid.dim());
        for i in 0..n {
            c.rho[i] += 0.5 * rho0[i];
            c.rho[(self.nt - 1) * n + i] += 0.5 * rho1[i];
        }
        c
    }
}

/// `Σ (|w|²+s²)/ρ` over centered points; zero where `ρ = 0` and the momenta vanish.
fn energy_sum(p: &Centered, dim: usize) -> f64 {
    crate::par::sum(p.rho.len(), |i| {
        let r = p.rho[i];
        let m2: f64 = p.w[i * dim..(i + 1) * dim].iter().map(|v| v * v).sum::<f64>() + p.s[i] * p.s[i];
        if m2 == 0.0 {
            0.0
        } else if r > 0.0 {
            m2 / r
        } else {
            f64::INFINITY
        }
    })
}

/// Largest singular value of the interpolation, by power iteration on `IᵀI`.
fn interp_norm(interp: &Interp, dim: usize) -> f64 {
    let n = interp.grid.len();
    let nt = interp.nt;
    let mut x = Staggered::zeros(interp.grid, nt);
    // deterministic, non-degenerate start vector
    let fill = |v: &mut Vec<f64>, salt: usize| {
        v.iter_mut().enumerate().for_each(|(i, x)| *x = 1.0 + 0.5 * (((i * 7919 + salt) % 13) as f64 / 13.0));
    };
    fill(&mut x.rho, 1);
    for (a, w) in x.w.iter_mut().enumerate() {
        fill(w, 2 + a);
    }
    fill(&mut x.s, 5);
    let mut y = Centered::zeros(nt * n, dim);
    let mut estimate = 0.0;
    for _ in 0..50 {
        let norm = x.norm();
        x.combine(1.0 / norm, &Staggered::zeros(interp.grid, nt), 0.0);
        interp.apply(&x, &mut y);
        interp.adjoint(&y, &mut x);
        estimate = x.norm().sqrt();
    }
    estimate
}

/// Estimates `d²(ρ₀, ρ₁)` and returns a discrete geodesic.
///
/// The unknowns are densities on time faces, momenta on spatial faces and
/// sources on cell centers; the energy is evaluated after averaging them to
/// cell centers. Chambolle–Pock iterations alternate the pointwise proximal
/// map of the energy (dual side, through Moreau's identity) with the
/// projection onto the discrete continuity equation (primal side).
pub fn solve_distance(rho0: &GridMeasure, rho1: &GridMeasure, opts: &SolverOptions) -> Result<(SolverReport, SpaceTimePath)> {
    opts.validate()?;
    rho0.grid().check_same(rho1.grid())?;
    let grid = rho0.grid().clone();
    let nt = opts.nt;
    let n = grid.len();
    let dim = grid.dim();
    let weight = grid.cell_volume() / nt as f64;
    let projector = ContinuityProjector::new(&grid, nt, rho0.values(), rho1.values())?;
    let interp = Interp { grid: &grid, nt };
    let offset = interp.offset(rho0.values(), rho1.values());

    // Step sizes keep τσ‖I‖² < 1; their ratio adapts to balance the primal
    // and dual residuals, each relative to the size of its driving term, with
    // geometrically shrinking adjustments.
    let norm = interp_norm(&interp, dim);
    let mut tau = opts.step_ratio / norm;
    let mut sigma = 0.99 / (opts.step_ratio * norm);
    let mut adapt = ADAPT_START;
    debug!("interpolation norm {norm:.6}");

    // start from linear interpolation in time, projected onto the constraint
    let mut x = Staggered::zeros(&grid, nt);
    for j in 1..nt {
        let theta = j as f64 / nt as f64;
        for i in 0..n {
            x.rho[(j - 1) * n + i] = (1.0 - theta) * rho0.values()[i] + theta * rho1.values()[i];
        }
    }
    projector.project(&mut x)?;
    let mut x_bar = x.clone();
    let mut x_prev = x.clone();
    let mut kt_y = Staggered::zeros(&grid, nt);
    let mut y = Centered::zeros(nt * n, dim);
    let mut kx = Centered::zeros(nt * n, dim);
    let mut p = Centered::zeros(nt * n, dim);
    let mut y_prev = y.clone();
    let mut kd = kx.clone();
    let mut diff = x.clone();

    let scale = (rho0.mass() + rho1.mass()).max(f64::MIN_POSITIVE);
    let mut history = Vec::new();
    let mut last_obj = f64::NAN;
    let mut primal_residual = f64::INFINITY;
    let mut dual_residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        // dual step: y ← v − σ prox_{F/σ}(v/σ + c) + σc, v = y + σ I x̄
        interp.apply(&x_bar, &mut kx);
        y_prev.clone_from(&y);
        let prox_step = 2.0 / sigma;
        {
            let Centered { rho: yr, w: yw, s: ys } = &mut y;
            let Centered { rho: pr, w: pw, s: ps } = &mut p;
            yr.par_iter_mut()
                .zip(ys.par_iter_mut())
                .zip(yw.par_chunks_mut(dim))
                .zip(pr.par_iter_mut().zip(ps.par_iter_mut()).zip(pw.par_chunks_mut(dim)))
                .enumerate()
                .for_each(|(i, (((yr, ys), yw), ((pr, ps), pw)))| {
                    let vr = *yr + sigma * kx.rho[i];
                    let vs = *ys + sigma * kx.s[i];
                    for a in 0..dim {
                        pw[a] = (yw[a] + sigma * kx.w[i * dim + a]) / sigma;
                    }
                    let (r, s) = prox_energy(vr / sigma + offset.rho[i], pw, vs / sigma, prox_step);
                    *pr = r;
                    *ps = s;
                    *yr = vr - sigma * (r - offset.rho[i]);
                    *ys = vs - sigma * s;
                    for a in 0..dim {
                        let va = yw[a] + sigma * kx.w[i * dim + a];
                        yw[a] = va - sigma * pw[a];
                    }
                });
        }
        // primal step: x ← P(x − τ Iᵀy)
        std::mem::swap(&mut x_prev, &mut x);
        interp.adjoint(&y, &mut kt_y);
        x.clone_from(&x_prev);
        x.combine(1.0, &kt_y, -tau);
        projector.project(&mut x)?;

        if adapt > ADAPT_FLOOR {
            // R_x = ‖x_k − x_{k+1}‖/(τ‖Iᵀy‖), R_y = ‖(y_k − y_{k+1})/σ + I(x̄_k − x_{k+1})‖/‖p‖
            diff.clone_from(&x_bar);
            diff.combine(1.0, &x, -1.0);
            interp.apply(&diff, &mut kd);
            let r_x = x.distance(&x_prev) / tau / kt_y.norm().max(1e-300);
            let r_y = dual_step_residual(&y_prev, &y, &kd, sigma) / p.norm2().sqrt().max(1e-300);
            if r_x > ADAPT_BALANCE * r_y {
                tau /= 1.0 - adapt;
                sigma *= 1.0 - adapt;
                adapt *= ADAPT_DECAY;
            } else if r_y > ADAPT_BALANCE * r_x {
                tau *= 1.0 - adapt;
                sigma /= 1.0 - adapt;
                adapt *= ADAPT_DECAY;
            }
        }
        x_bar.clone_from(&x);
        x_bar.combine(2.0, &x_prev, -1.0);

        if iter % CHECK_EVERY == 0 || iter == opts.max_iter {
            let obj = weight * energy_sum(&p, dim);
            if !obj.is_finite() {
                return Err(Error::NonFinite(format!("objective at iteration {iter}")));
            }
            interp.apply(&x, &mut kx);
            add_offset(&mut kx, &offset);
            primal_residual = (kx.dist2(&p) / p.norm2().max(f64::MIN_POSITIVE)).sqrt();
            dual_residual = (obj - last_obj).abs() / obj.max(1e-6 * scale);
            last_obj = obj;
            history.push(obj);
            if primal_residual <= opts.tol_feas && dual_residual <= opts.tol_gap {
                converged = true;
                break;
            }
        }
    }
    let d2 = weight * energy_sum(&p, dim);
    let continuity_residual = l2(&projector.residual(&x));
    info!(
        "solve finished: d2 {d2:.6e}, {iterations} iterations, converged {converged}, primal {primal_residual:.2e}, dual {dual_residual:.2e}"
    );
    let report = SolverReport {
        d2,
        iterations,
        converged,
        primal_residual,
        dual_residual,
        continuity_residual,
        energy_history: history,
    };
    let path = build_path(&grid, nt, rho0, rho1, &x, &p)?;
    Ok((report, path))
}

fn dual_step_residual(prev: &Centered, next: &Centered, kd: &Centered, sigma: f64) -> f64 {
    let part = |a: &[f64], b: &[f64], k: &[f64]| {
        crate::par::sum(a.len(), |i| ((a[i] - b[i]) / sigma + k[i]).powi(2))
    };
    (part(&prev.rho, &next.rho, &kd.rho) + part(&prev.w, &next.w, &kd.w) + part(&prev.s, &next.s, &kd.s)).sqrt()
}

fn add_offset(c: &mut Centered, offset: &Centered) {
    c.rho.iter_mut().zip(&offset.rho).for_each(|(a, b)| *a += b);
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Node densities from the feasible iterate (clipped at zero); potentials
/// `u = s/ρ`, `∇u = w/ρ` from the energy point, zero below
/// `ρ_floor = 1e-12·max ρ`.
fn build_path(
    grid: &Grid,
    nt: usize,
    rho0: &GridMeasure,
    rho1: &GridMeasure,
    x: &Staggered,
    p: &Centered,
) -> Result<SpaceTimePath> {
    let n = grid.len();
    let dim = grid.dim();
    let times: Vec<f64> = (0..=nt).map(|k| k as f64 / nt as f64).collect();
    let mut densities = Vec::with_capacity(nt + 1);
    densities.push(rho0.clone());
    for j in 1..nt {
        densities.push(GridMeasure::from_clipped(grid.clone(), x.rho[(j - 1) * n..j * n].to_vec())?);
    }
    densities.push(rho1.clone());

    let floor = 1e-12 * p.rho.iter().cloned().fold(0.0, f64::max);
    let vol = grid.cell_volume();
    let mut potentials = Vec::with_capacity(nt);
    let mut step_energy = Vec::with_capacity(nt);
    for k in 0..nt {
        let mut u = vec![0.0; n];
        let mut grad = vec![vec![0.0; n]; dim];
        let mut energy = 0.0;
        for i in 0..n {
            let idx = k * n + i;
            let r = p.rho[idx];
            if r > floor {
                u[i] = p.s[idx] / r;
                let mut m2 = p.s[idx] * p.s[idx];
                for (a, g) in grad.iter_mut().enumerate() {
                    let w = p.w[idx * dim + a];
                    g[i] = w / r;
                    m2 += w * w;
                }
                energy += m2 / r;
            }
        }
        potentials.push(PotentialField::new(grid.clone(), u, grad, Layout::Collocated)?);
        step_energy.push(energy * vol);
    }
    SpaceTimePath::new(times, densities, potentials, step_energy)
}
