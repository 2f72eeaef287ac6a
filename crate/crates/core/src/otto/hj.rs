//! Grid evolution of the coupled continuity and Hamilton–Jacobi system
//! `∂ₜρ = −div(ρ∇u) + ρu`, `∂ₜu = −½(u² + |∇u|²)`.
//!
//! The divergence is the negative adjoint of the centered gradient, which makes
//! the semi-discrete system conserve `Σ ρ(|∇u|² + u²)` exactly; the RK2 step
//! then drifts at second order in `dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::{GridMeasure, Layout, PotentialField};

/// CFL number: `dt ≤ CFL · h / max|∇u|`.
pub const CFL: f64 = 0.5;

fn rhs(grid: &Grid, rho: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let grad = grid.gradient(u);
    let mut drho: Vec<f64> = rho.iter().zip(u).map(|(r, v)| r * v).collect();
    for (a, g) in grad.iter().enumerate() {
        let flux: Vec<f64> = rho.iter().zip(g).map(|(r, g)| r * g).collect();
        for (d, v) in drho.iter_mut().zip(grid.centered_diff_adjoint(&flux, a)) {
            *d += v;
        }
    }
    let du = (0..u.len())
        .map(|i| {
            let g2: f64 = grad.iter().map(|g| g[i] * g[i]).sum();
            -0.5 * (u[i] * u[i] + g2)
        })
        .collect();
    (drho, du)
}

fn max_grad(grid: &Grid, u: &[f64]) -> f64 {
    let grad = grid.gradient(u);
    (0..u.len()).map(|i| grad.iter().map(|g| g[i] * g[i]).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

fn check_cfl(grid: &Grid, u: &[f64], dt: f64) -> Result<()> {
    if !dt.is_finite() {
        return Err(Error::NonFinite("time step".into()));
    }
    let h = grid.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let gmax = max_grad(grid, u);
    if gmax.is_nan() {
        return Err(Error::NonFinite("potential gradient".into()));
    }
    if dt.abs() * gmax > CFL * h {
        return Err(Error::StepTooLarge { dt: dt.abs(), bound: CFL * h / gmax });
    }
    Ok(())
}

/// Midpoint step of the Hamilton–Jacobi equation alone; it does not see `ρ`.
fn potential_step(grid: &Grid, u: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_cfl(grid, u, dt)?;
    let zeros = vec![0.0; u.len()];
    let (_, u1) = rhs(grid, &zeros, u);
    let mid: Vec<f64> = u.iter().zip(&u1).map(|(u, d)| u + 0.5 * dt * d).collect();
    let (_, u2) = rhs(grid, &zeros, &mid);
    let next: Vec<f64> = u.iter().zip(&u2).map(|(u, d)| u + dt * d).collect();
    if let Some(i) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("potential blew up in cell {i}")));
    }
    Ok(next)
}

fn uniform_steps(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidInput(format!("need dt > 0 and t_end ≥ 0, got {dt}, {t_end}")));
    }
    let n = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    Ok((n, if n == 0 { 0.0 } else { t_end / n as f64 }))
}

/// One explicit midpoint (RK2) step of the geodesic system. Negative `dt` runs backward.
///
/// The gradient is recomputed from `u` with centered differences and mirror
/// ghost cells; the returned couple is collocated and consistent.
pub fn hj_geodesic_step(rho: &GridMeasure, pot: &PotentialField, dt: f64) -> Result<(GridMeasure, PotentialField)> {
    let grid = rho.grid();
    grid.check_same(&pot.grid)?;
    if pot.layout != Layout::Collocated {
        return Err(Error::InvalidInput("geodesic step needs a collocated potential".into()));
    }
    check_cfl(grid, &pot.u, dt)?;
    let (r1, u1) = rhs(grid, rho.values(), &pot.u);
    let rho_mid: Vec<f64> = rho.values().iter().zip(&r1).map(|(r, d)| r + 0.5 * dt * d).collect();
    let u_mid: Vec<f64> = pot.u.iter().zip(&u1).map(|(u, d)| u + 0.5 * dt * d).collect();
    let (r2, u2) = rhs(grid, &rho_mid, &u_mid);
    let rho_new: Vec<f64> = rho.values().iter().zip(&r2).map(|(r, d)| r + dt * d).collect();
    let u_new: Vec<f64> = pot.u.iter().zip(&u2).map(|(u, d)| u + dt * d).collect();
    if let Some(i) = u_new.iter().chain(&rho_new).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("geodesic state blew up at entry {i}")));
    }
    Ok((GridMeasure::new(grid.clone(), rho_new)?, PotentialField::from_potential(grid.clone(), u_new)?))
}

/// Runs `hj_geodesic_step` up to `t_end` with steps of at most `dt`; returns
/// every frame including the initial one.
pub fn hj_evolve(
    rho: &GridMeasure,
    pot: &PotentialField,
    t_end: f64,
    dt: f64,
) -> Result<Vec<(GridMeasure, PotentialField)>> {
    let (n, step) = uniform_steps(t_end, dt)?;
    let start = PotentialField::from_potential(pot.grid.clone(), pot.u.clone())?;
    let mut frames = vec![(rho.clone(), start)];
    for _ in 0..n {
        let (r, p) = frames.last().unwrap();
        let next = hj_geodesic_step(r, p, step)?;
        frames.push(next);
    }
    Ok(frames)
}

/// `‖𝔲‖²_{H¹(dρ)} = ∫(|∇u|² + u²) dρ`.
pub fn metric_speed_sq(rho: &GridMeasure, pot: &PotentialField) -> Result<f64> {
    pot.h1_norm_sq(rho)
}

/// Largest relative change of the squared metric speed along the evolution.
pub fn speed_drift(rho: &GridMeasure, pot: &PotentialField, t_end: f64, dt: f64) -> Result<f64> {
    let frames = hj_evolve(rho, pot, t_end, dt)?;
    let s0 = metric_speed_sq(&frames[0].0, &frames[0].1)?;
    if s0 == 0.0 {
        return Ok(0.0);
    }
    let mut worst: f64 = 0.0;
    for (r, p) in &frames[1..] {
        worst = worst.max((metric_speed_sq(r, p)? - s0).abs() / s0);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    /// Largest angle (radians) between `∇u/|∇u|` at a point of a
    /// characteristic and at its start.
    pub max_deviation: f64,
    pub characteristics: usize,
    /// Samples dropped because `|∇u|` fell below the threshold or the
    /// characteristic left the grid.
    pub skipped: usize,
}

/// Most characteristics traced by [`direction_invariance_check`].
pub const MAX_CHARACTERISTICS: usize = 64;

fn interp_grad(grid: &Grid, grad: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    grad.iter().map(|g| grid.interpolate(g, x)).collect()
}

fn inside_centers(grid: &Grid, x: &[f64]) -> bool {
    (0..grid.dim()).all(|a| {
        let lo = grid.origin[a] + 0.5 * grid.spacing[a];
        let hi = grid.origin[a] + (grid.shape[a] as f64 - 0.5) * grid.spacing[a];
        x[a] >= lo && x[a] <= hi
    })
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // atan2 of |a×b| and a·b stays accurate for tiny angles; grids are 1D or 2D
    let cross = if a.len() == 2 { (a[0] * b[1] - a[1] * b[0]).abs() } else { 0.0 };
    cross.atan2(dot)
}

/// Follows characteristics `x′ = ∇u` through the Hamilton–Jacobi evolution and
/// measures how far the unit direction `∇u/|∇u|` turns along them.
///
/// Characteristics start at cell centers where `ρ ≥ ½ max ρ`, thinned to at
/// most [`MAX_CHARACTERISTICS`]. Samples with `|∇u| < 1e-8·max|∇u|` are skipped.
pub fn direction_invariance_check(
    rho: &GridMeasure,
    pot: &PotentialField,
    t_end: f64,
    dt: f64,
) -> Result<DirectionCheck> {
    let grid = rho.grid().clone();
    grid.check_same(&pot.grid)?;
    let (n, step) = uniform_steps(t_end, dt)?;
    let mut u = pot.u.clone();
    let mut grads = vec![grid.gradient(&u)];
    for _ in 0..n {
        u = potential_step(&grid, &u, step)?;
        grads.push(grid.gradient(&u));
    }
    let eps = 1e-8 * max_grad(&grid, &pot.u);

    let threshold = 0.5 * rho.max();
    let seeds: Vec<usize> = (0..grid.len()).filter(|&i| rho.values()[i] >= threshold && threshold > 0.0).collect();
    let stride = seeds.len().div_ceil(MAX_CHARACTERISTICS).max(1);
    let seeds: Vec<usize> = seeds.into_iter().step_by(stride).collect();

    let mut max_deviation: f64 = 0.0;
    let mut skipped = 0;
    for &seed in &seeds {
        let mut x = grid.center(seed);
        let g0 = interp_grad(&grid, &grads[0], &x);
        if g0.iter().map(|g| g * g).sum::<f64>().sqrt() < eps {
            skipped += grads.len();
            continue;
        }
        for k in 1..grads.len() {
            // Heun step of x′ = ∇u using the gradients at both ends of the step
            let ga = interp_grad(&grid, &grads[k - 1], &x);
            let pred: Vec<f64> = x.iter().zip(&ga).map(|(x, g)| x + step * g).collect();
            let gb = interp_grad(&grid, &grads[k], &pred);
            for a in 0..x.len() {
                x[a] += 0.5 * step * (ga[a] + gb[a]);
            }
            if !inside_centers(&grid, &x) {
                skipped += grads.len() - k;
                break;
            }
            let g = interp_grad(&grid, &grads[k], &x);
            if g.iter().map(|g| g * g).sum::<f64>().sqrt() < eps {
                skipped += 1;
                continue;
            }
            max_deviation = max_deviation.max(angle(&g0, &g));
        }
    }
    Ok(DirectionCheck { max_deviation, characteristics: seeds.len(), skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_potential_is_stationary() {
        let g = Grid::interval(32, 0.0, 1.0).unwrap();
        let rho = GridMeasure::from_fn(g.clone(), |x| 1.0 + x[0]).unwrap();
        let pot = PotentialField::zeros(g);
        let (r, p) = hj_geodesic_step(&rho, &pot, 0.1).unwrap();
        assert_eq!(r, rho);
        assert!(p.u.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_potential_solves_scalar_ode() {
        // u(t) = 2c/(2 + ct), ρ(t) = ρ₀ (1 + ct/2)²
        let g = Grid::interval(16, 0.0, 1.0).unwrap();
        let rho = GridMeasure::from_fn(g.clone(), |x| 0.5 + x[0] * x[0]).unwrap();
        let c = 1.3;
        let pot = PotentialField::from_fn(g, |_| c).unwrap();
        let frames = hj_evolve(&rho, &pot, 0.5, 1e-3).unwrap();
        let (r, p) = frames.last().unwrap();
        let t = 0.5;
        assert!((p.u[3] - 2.0 * c / (2.0 + c * t)).abs() < 1e-6);
        let growth = (1.0 + c * t / 2.0).powi(2);
        for (a, b) in r.values().iter().zip(rho.values()) {
            assert!((a - b * growth).abs() < 1e-6);
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = Grid::interval(10, 0.0, 1.0).unwrap();
        let rho = GridMeasure::from_fn(g.clone(), |_| 1.0).unwrap();
        let pot = PotentialField::from_fn(g, |x| 5.0 * x[0]).unwrap();
        assert!(matches!(hj_geodesic_step(&rho, &pot, 0.1), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn speed_drift_is_second_order() {
        let g = Grid::interval(64, 0.0, std::f64::consts::PI).unwrap();
        let rho = GridMeasure::from_fn(g.clone(), |x| 1.0 + 0.5 * x[0].cos()).unwrap();
        let pot = PotentialField::from_fn(g, |x| 0.5 * (2.0 * x[0]).cos()).unwrap();
        let d1 = speed_drift(&rho, &pot, 0.4, 1e-2).unwrap();
        let d2 = speed_drift(&rho, &pot, 0.4, 5e-3).unwrap();
        assert!(d1 > 0.0 && (d1 / d2).log2() > 1.8, "{d1} {d2}");
    }

    #[test]
    fn monotone_potential_keeps_direction_in_one_dimension() {
        let g = Grid::interval(64, 0.0, 1.0).unwrap();
        let rho = GridMeasure::from_fn(g.clone(), |x| (-(x[0] - 0.5).powi(2) * 50.0).exp()).unwrap();
        let pot = PotentialField::from_fn(g, |x| 0.3 * x[0] + 0.1 * x[0] * x[0]).unwrap();
        let check = direction_invariance_check(&rho, &pot, 0.3, 1e-2).unwrap();
        assert_eq!(check.max_deviation, 0.0);
        assert!(check.characteristics > 0);
    }

    #[test]
    fn radial_potential_keeps_rays() {
        let g = Grid::rectangle(40, 40, (-1.0, -1.0), (1.0, 1.0)).unwrap();
        let rho = GridMeasure::from_fn(g.clone(), |x| (-(x[0] * x[0] + x[1] * x[1]) * 4.0).exp()).unwrap();
        let pot = PotentialField::from_fn(g, |x| 0.5 * (x[0] * x[0] + x[1] * x[1])).unwrap();
        let check = direction_invariance_check(&rho, &pot, 0.2, 1e-2).unwrap();
        assert!(check.max_deviation < 1e-3, "{}", check.max_deviation);
    }
}
