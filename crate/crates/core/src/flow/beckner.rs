//! Empirical constant for the entropy–entropy production inequality
//! `Φ(∫ρ)∫|ρ−m|² ≤ ∫ρ|ρ−m|² + ∫ρ|∇(ρ−m)|²` with `Φ(λ) = min(λ, λ²/(2C_Ω))`.
//!
//! `C_Ω` comes from random smooth densities on the domain rescaled to unit
//! volume. Each trial contributes the Beckner ratio
//! `‖ρ‖₂(∫ρ² − (∫ρ)²) / ∫ρ|∇ρ|²` and, for a random resource field `m`, the
//! smallest constant that makes the full inequality hold. The constants that
//! depend on `m` are therefore part of the estimate, and decay rates derived
//! from it are relative to this certificate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::weighted_face_energy;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::GridMeasure;

pub const SAFETY_FACTOR: f64 = 1.5;

/// Fourier modes per axis in [`random_field`].
const MODES: usize = 6;
/// Floor of random densities before scaling.
const DENSITY_MIN: f64 = 0.1;

/// Random smooth positive field `Σ a_n cos(π n·x̂ + φ_n)/|n|²` over `n ≠ 0`
/// with standard normal `a_n` and uniform phases, shifted so its minimum is `min`.
pub fn random_field(grid: &Grid, rng: &mut impl Rng, min: f64) -> Result<GridMeasure> {
    let dim = grid.dim();
    let len: Vec<f64> = (0..dim).map(|a| grid.spacing[a] * grid.shape[a] as f64).collect();
    let mut modes = Vec::new();
    let top = if dim == 1 { 0 } else { MODES };
    for n1 in 0..=MODES {
        for n2 in 0..=top {
            if n1 + n2 == 0 {
                continue;
            }
            let a: f64 = rng.sample(StandardNormal);
            let phases: [f64; 2] = [rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU)];
            modes.push(([n1, n2], a / (n1 * n1 + n2 * n2) as f64, phases));
        }
    }
    let mut values: Vec<f64> = grid
        .centers()
        .iter()
        .map(|x| {
            modes
                .iter()
                .map(|(n, a, ph)| {
                    let mut v = *a;
                    for ax in 0..dim {
                        let xh = (x[ax] - grid.origin[ax]) / len[ax];
                        v *= (std::f64::consts::PI * n[ax] as f64 * xh + ph[ax]).cos();
                    }
                    v
                })
                .sum()
        })
        .collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    values.iter_mut().for_each(|v| *v = *v - lo + min);
    GridMeasure::new(grid.clone(), values)
}

/// The same grid shrunk or stretched to unit volume.
fn unit_volume(grid: &Grid) -> Result<Grid> {
    let s = grid.volume().powf(-1.0 / grid.dim() as f64);
    Grid::new(grid.shape.clone(), grid.spacing.iter().map(|h| h * s).collect(), grid.origin.iter().map(|o| o * s).collect())
}

fn integral(grid: &Grid, f: impl Iterator<Item = f64>) -> f64 {
    f.sum::<f64>() * grid.cell_volume()
}

/// `(‖ρ‖₂(∫ρ² − (∫ρ)²), ∫ρ|∇ρ|²)` on a unit-volume grid.
fn beckner_sides(rho: &GridMeasure) -> (f64, f64) {
    let g = rho.grid();
    let l2 = integral(g, rho.values().iter().map(|r| r * r));
    let lhs = l2.sqrt() * (l2 - rho.mass() * rho.mass());
    (lhs, weighted_face_energy(g, rho.values(), rho.values()))
}

/// `(∫|ρ−m|², ∫ρ|ρ−m|² + ∫ρ|∇(ρ−m)|²)`.
fn production_sides(rho: &GridMeasure, m: &GridMeasure) -> Result<(f64, f64)> {
    let g = rho.grid();
    g.check_same(m.grid())?;
    let phi: Vec<f64> = rho.values().iter().zip(m.values()).map(|(r, m)| r - m).collect();
    let a = integral(g, phi.iter().map(|p| p * p));
    let b = integral(g, rho.values().iter().zip(&phi).map(|(r, p)| r * p * p)) + weighted_face_energy(g, rho.values(), &phi);
    Ok((a, b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BecknerCertificate {
    #[serde(rename = "C_Omega")]
    pub c_omega: f64,
    pub samples_checked: usize,
    /// Smallest relative margin `(rhs − lhs)/rhs` over the checked pairs.
    pub min_margin: f64,
    pub trials: usize,
    /// Trials with a vanishing right-hand side (constant densities).
    pub skipped: usize,
    pub seed: u64,
}

impl BecknerCertificate {
    /// `Φ(λ) = min(λ, λ²/(2C_Ω))`.
    pub fn phi(&self, lambda: f64) -> f64 {
        lambda.min(lambda * lambda / (2.0 * self.c_omega))
    }

    /// Relative margin of the inequality for one pair on a unit-volume grid.
    pub fn margin(&self, rho: &GridMeasure, m: &GridMeasure) -> Result<f64> {
        let (a, b) = production_sides(rho, m)?;
        let lhs = self.phi(rho.mass()) * a;
        Ok(if b > 0.0 { (b - lhs) / b } else if lhs > 0.0 { f64::NEG_INFINITY } else { 0.0 })
    }

    /// Checks the inequality on `n_pairs` fresh random pairs, drawn from streams
    /// disjoint from those used for the estimate, and records the result.
    pub fn validate(&self, domain: &Grid, n_pairs: usize, seed: u64) -> Result<BecknerCertificate> {
        let unit = unit_volume(domain)?;
        let margins = (0..n_pairs)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, VALIDATION_STREAM + i as u64);
                let (rho, m) = random_pair(&unit, &mut rng)?;
                self.margin(&rho, &m)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(BecknerCertificate {
            samples_checked: n_pairs,
            min_margin: margins.into_iter().fold(f64::INFINITY, f64::min),
            ..self.clone()
        })
    }
}

const VALIDATION_STREAM: u64 = 1 << 40;

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Density with mass log-uniform in `[0.02, 5]` and resources with minimum
/// uniform in `[0.2, 1]`.
fn random_pair(grid: &Grid, rng: &mut ChaCha8Rng) -> Result<(GridMeasure, GridMeasure)> {
    let rho = random_field(grid, rng, DENSITY_MIN)?;
    let mass = (rng.gen_range(0.02f64.ln()..5f64.ln())).exp();
    let rho = rho.scaled(mass / rho.mass())?;
    let m_min = rng.gen_range(0.2..1.0);
    let m = random_field(grid, rng, m_min)?;
    Ok((rho, m))
}

/// Estimates `C_Ω` from `n_trials` random trials (times [`SAFETY_FACTOR`]).
pub fn estimate_beckner_constant(domain: &Grid, n_trials: usize, seed: u64) -> Result<BecknerCertificate> {
    if n_trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let unit = unit_volume(domain)?;
    let trials = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let rho = random_field(&unit, &mut rng, DENSITY_MIN)?;
            let rho = rho.scaled(1.0 / rho.mass())?;
            let (lhs, rhs) = beckner_sides(&rho);
            let ratio = (rhs > 1e-14 * lhs.abs().max(1e-300)).then(|| lhs / rhs);
            let (p, m) = random_pair(&unit, &mut rng)?;
            let (a, b) = production_sides(&p, &m)?;
            let lambda = p.mass();
            // Φ_C(λ)·a ≤ b needs λ²a/(2C) ≤ b whenever λa > b
            let needed = if lambda * a > b && b > 0.0 { lambda * lambda * a / (2.0 * b) } else { 0.0 };
            Ok((ratio, needed, p, m))
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped = trials.iter().filter(|t| t.0.is_none()).count();
    let raw = trials.iter().map(|t| t.0.unwrap_or(0.0).max(t.1)).fold(0.0, f64::max);
    if !(raw > 0.0) {
        return Err(Error::InvalidInput("no informative trial".into()));
    }
    let mut cert = BecknerCertificate {
        c_omega: SAFETY_FACTOR * raw,
        samples_checked: trials.len(),
        min_margin: f64::INFINITY,
        trials: n_trials,
        skipped,
        seed,
    };
    for (_, _, p, m) in &trials {
        cert.min_margin = cert.min_margin.min(cert.margin(p, m)?);
    }
    Ok(cert)
}
