//! Second variation of an internal energy `𝓔(ρ) = ∫E(ρ)` along geodesics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{GridMeasure, Layout, PotentialField};
use crate::otto::hj::hj_geodesic_step;

/// Energy density `E` with its first two derivatives. The pressure-like
/// coefficients follow as
/// `P = E′ρ − E`, `P₂ = P′ρ − P = E″ρ² − E′ρ + E`, `Q = E′ρ`, `Q₂ = Q′ρ = E″ρ² + E′ρ`.
#[derive(Clone, Copy, Debug)]
pub struct InternalEnergySpec {
    pub name: &'static str,
    pub e: fn(f64) -> f64,
    pub de: fn(f64) -> f64,
    pub d2e: fn(f64) -> f64,
}

impl InternalEnergySpec {
    /// `E = ρ²/2`.
    pub const QUADRATIC: Self = Self { name: "quadratic", e: |r| 0.5 * r * r, de: |r| r, d2e: |_| 1.0 };
    /// `E = ρ³`.
    pub const CUBIC: Self = Self { name: "cubic", e: |r| r * r * r, de: |r| 3.0 * r * r, d2e: |r| 6.0 * r };
    /// `E = ρ log ρ − ρ`, finite only for `ρ > 0`.
    pub const ENTROPY: Self = Self { name: "entropy", e: |r| r * r.ln() - r, de: |r| r.ln(), d2e: |r| 1.0 / r };

    pub const PRESETS: [Self; 3] = [Self::QUADRATIC, Self::CUBIC, Self::ENTROPY];

    pub fn preset(name: &str) -> Result<Self> {
        Self::PRESETS
            .into_iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown energy '{name}', expected quadratic, cubic or entropy")))
    }

    pub fn p(&self, r: f64) -> f64 {
        (self.de)(r) * r - (self.e)(r)
    }

    pub fn p2(&self, r: f64) -> f64 {
        (self.d2e)(r) * r * r - (self.de)(r) * r + (self.e)(r)
    }

    pub fn q(&self, r: f64) -> f64 {
        (self.de)(r) * r
    }

    pub fn q2(&self, r: f64) -> f64 {
        (self.d2e)(r) * r * r + (self.de)(r) * r
    }

    /// `∫E(ρ)` by the midpoint rule.
    pub fn energy(&self, rho: &GridMeasure) -> Result<f64> {
        let sum: f64 = rho.values().iter().map(|&r| (self.e)(r)).sum();
        if !sum.is_finite() {
            return Err(Error::NonFinite(format!("{} energy", self.name)));
        }
        Ok(sum * rho.grid().cell_volume())
    }
}

/// Quadratic form
/// `∫ PΓ₂(u) + P₂|Δu|² − (2P₂+P)uΔu + (Q₂ − Q/2 − P₂)|∇u|² + (Q₂ − Q/2)u²`
/// with `Γ₂(u) = Σᵢⱼ|∂ᵢⱼu|²`.
///
/// Second derivatives use three-point and centered-product stencils; cells
/// within one stencil width of the boundary are left out of the sum.
pub fn hessian_internal_energy(rho: &GridMeasure, pot: &PotentialField, spec: &InternalEnergySpec) -> Result<f64> {
    let grid = rho.grid();
    grid.check_same(&pot.grid)?;
    if pot.layout != Layout::Collocated {
        return Err(Error::InvalidInput("Hessian needs a collocated potential".into()));
    }
    let dim = grid.dim();
    let u = &pot.u;
    let pure: Vec<Vec<f64>> = (0..dim).map(|a| grid.second_diff(u, a)).collect();
    let mixed = if dim == 2 { Some(grid.centered_diff(&grid.centered_diff(u, 0), 1)) } else { None };
    let mut sum = 0.0;
    for i in 0..grid.len() {
        let interior = (0..dim).all(|a| {
            let c = grid.coord(i, a);
            c > 0 && c + 1 < grid.shape[a]
        });
        if !interior {
            continue;
        }
        let r = rho.values()[i];
        let lap: f64 = pure.iter().map(|d| d[i]).sum();
        let mut gamma2: f64 = pure.iter().map(|d| d[i] * d[i]).sum();
        if let Some(m) = &mixed {
            gamma2 += 2.0 * m[i] * m[i];
        }
        let g2: f64 = pot.grad.iter().map(|g| g[i] * g[i]).sum();
        let (p, p2, q, q2) = (spec.p(r), spec.p2(r), spec.q(r), spec.q2(r));
        sum += p * gamma2 + p2 * lap * lap - (2.0 * p2 + p) * u[i] * lap
            + (q2 - 0.5 * q - p2) * g2
            + (q2 - 0.5 * q) * u[i] * u[i];
    }
    if !sum.is_finite() {
        return Err(Error::NonFinite(format!("{} Hessian", spec.name)));
    }
    Ok(sum * grid.cell_volume())
}

/// `(𝓔(ρ₊) − 2𝓔(ρ) + 𝓔(ρ₋))/dt²` with `ρ±` one geodesic step forward and
/// backward. The RK2 map is smooth in `dt`, so odd-order errors cancel.
pub fn hessian_fd(rho: &GridMeasure, pot: &PotentialField, spec: &InternalEnergySpec, dt: f64) -> Result<f64> {
    let (fwd, _) = hj_geodesic_step(rho, pot, dt)?;
    let (bwd, _) = hj_geodesic_step(rho, pot, -dt)?;
    Ok((spec.energy(&fwd)? - 2.0 * spec.energy(rho)? + spec.energy(&bwd)?) / (dt * dt))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub formula_value: f64,
    pub fd_value: f64,
    pub rel_err: f64,
}

pub fn hessian_report(
    rho: &GridMeasure,
    pot: &PotentialField,
    spec: &InternalEnergySpec,
    dt: f64,
) -> Result<HessianReport> {
    let formula_value = hessian_internal_energy(rho, pot, spec)?;
    let fd_value = hessian_fd(rho, pot, spec, dt)?;
    let scale = formula_value.abs().max(fd_value.abs());
    let rel_err = if scale == 0.0 { 0.0 } else { (formula_value - fd_value).abs() / scale };
    Ok(HessianReport { formula_value, fd_value, rel_err })
}
