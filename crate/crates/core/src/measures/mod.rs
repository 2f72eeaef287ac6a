//! Measure and potential representations plus the elementary functionals
//! (mass, quadratic entropy) and the two comparison metrics used to validate
//! the transport distance.

mod bounded_lipschitz;
mod wasserstein;

pub use bounded_lipschitz::{bounded_lipschitz, BoundedLipschitz};
pub use wasserstein::wasserstein2_1d;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Nonnegative density sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridMeasureFile", into = "GridMeasureFile")]
pub struct GridMeasure {
    grid: Grid,
    values: Vec<f64>,
    mass: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridMeasureFile {
    dim: usize,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<GridMeasureFile> for GridMeasure {
    type Error = Error;

    fn try_from(file: GridMeasureFile) -> Result<Self> {
        if file.dim != file.shape.len() {
            return Err(Error::InvalidInput(format!(
                "dim = {} but shape has {} axes",
                file.dim,
                file.shape.len()
            )));
        }
        GridMeasure::new(Grid::new(file.shape, file.spacing, file.origin)?, file.values)
    }
}

impl From<GridMeasure> for GridMeasureFile {
    fn from(m: GridMeasure) -> Self {
        GridMeasureFile {
            dim: m.grid.dim(),
            shape: m.grid.shape,
            spacing: m.grid.spacing,
            origin: m.grid.origin,
            values: m.values,
        }
    }
}

impl GridMeasure {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("density {value} in cell {cell}")));
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(Error::NegativeDensity { cell, value });
        }
        let mass = values.iter().sum::<f64>() * grid.cell_volume();
        Ok(Self { grid, values, mass })
    }

    /// Builds a measure after clipping tiny negative round-off to zero.
    pub fn from_clipped(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, values.into_iter().map(|v| v.max(0.0)).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n], mass: 0.0 }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.centers().iter().map(|x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|v| v * factor).collect())
    }

    /// Pointwise `(1-θ)·self + θ·other`.
    pub fn lerp(&self, other: &GridMeasure, theta: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| ((1.0 - theta) * a + theta * b).max(0.0))
            .collect();
        Self::new(self.grid.clone(), values)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Point charge `k δ_x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub x: Vec<f64>,
    pub k: f64,
}

/// Finite sum of point charges.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiracMeasure {
    pub atoms: Vec<Atom>,
}

impl DiracMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if let Some(a) = atoms.iter().find(|a| !(a.k >= 0.0 && a.k.is_finite())) {
            return Err(Error::InvalidInput(format!("charge {} is not a nonnegative number", a.k)));
        }
        if let Some(a) = atoms.iter().find(|a| a.x.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput(format!("atom position {:?} is not finite", a.x)));
        }
        Ok(Self { atoms })
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.k).sum()
    }

    /// Drops atoms whose charge is zero.
    pub fn normalize(&mut self) {
        self.atoms.retain(|a| a.k > 0.0);
    }

    /// Replaces each atom by a Gaussian blob of width `sigma`, renormalized so
    /// that the discrete mass of every blob equals its charge.
    pub fn rasterize(&self, grid: &Grid, sigma: f64) -> Result<GridMeasure> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidInput("blob width must be positive".into()));
        }
        let centers = grid.centers();
        let mut values = vec![0.0; grid.len()];
        for atom in self.atoms.iter().filter(|a| a.k > 0.0) {
            if atom.x.len() != grid.dim() {
                return Err(Error::InvalidInput("atom dimension differs from grid".into()));
            }
            let blob: Vec<f64> = centers
                .iter()
                .map(|c| {
                    let r2: f64 = c.iter().zip(&atom.x).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-0.5 * r2 / (sigma * sigma)).exp()
                })
                .collect();
            let total = blob.iter().sum::<f64>() * grid.cell_volume();
            if total <= 0.0 {
                return Err(Error::InvalidInput(format!("atom at {:?} falls outside the grid", atom.x)));
            }
            for (v, b) in values.iter_mut().zip(&blob) {
                *v += atom.k * b / total;
            }
        }
        GridMeasure::new(grid.clone(), values)
    }
}

/// Blob of mass `mass` and width `sigma` centered at `center`.
pub fn gaussian_blob(grid: &Grid, center: &[f64], sigma: f64, mass: f64) -> Result<GridMeasure> {
    DiracMeasure::new(vec![Atom { x: center.to_vec(), k: mass }])?.rasterize(grid, sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `u` and every gradient component at cell centers.
    Collocated,
    /// Gradient components on interior faces, one array per axis.
    Staggered,
}

/// Potential couple `(u, ∇u)`; the gradient is independent data and is not
/// required to be the discrete gradient of `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub grad: Vec<Vec<f64>>,
    pub layout: Layout,
}

impl PotentialField {
    pub fn new(grid: Grid, u: Vec<f64>, grad: Vec<Vec<f64>>, layout: Layout) -> Result<Self> {
        if u.len() != grid.len() || grad.len() != grid.dim() {
            return Err(Error::InvalidInput("potential does not match its grid".into()));
        }
        for (a, g) in grad.iter().enumerate() {
            let expected = match layout {
                Layout::Collocated => grid.len(),
                Layout::Staggered => grid.face_count(a),
            };
            if g.len() != expected {
                return Err(Error::InvalidInput(format!(
                    "gradient component {a} has {} entries, expected {expected}",
                    g.len()
                )));
            }
        }
        Ok(Self { grid, u, grad, layout })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        let dim = grid.dim();
        Self { grid, u: vec![0.0; n], grad: vec![vec![0.0; n]; dim], layout: Layout::Collocated }
    }

    /// Collocated couple whose gradient is the discrete gradient of `u`.
    pub fn from_potential(grid: Grid, u: Vec<f64>) -> Result<Self> {
        let grad = grid.gradient(&u);
        Self::new(grid, u, grad, Layout::Collocated)
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let u = grid.centers().iter().map(|x| f(x)).collect();
        Self::from_potential(grid, u)
    }

    /// `‖grad − D_h u‖∞` for a collocated couple.
    pub fn consistency_error(&self) -> f64 {
        match self.layout {
            Layout::Collocated => self
                .grid
                .gradient(&self.u)
                .iter()
                .zip(&self.grad)
                .flat_map(|(d, g)| d.iter().zip(g).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max),
            Layout::Staggered => (0..self.grid.dim())
                .flat_map(|a| {
                    let d = self.grid.face_diff(&self.u, a);
                    d.into_iter().zip(self.grad[a].clone()).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()
                })
                .fold(0.0, f64::max),
        }
    }

    pub fn is_consistent(&self, tol: f64) -> bool {
        self.consistency_error() <= tol
    }

    /// Squared norm `∫(|∇u|² + u²) dρ` for a collocated couple.
    pub fn h1_norm_sq(&self, rho: &GridMeasure) -> Result<f64> {
        self.grid.check_same(rho.grid())?;
        if self.layout != Layout::Collocated {
            return Err(Error::InvalidInput("weighted norm needs a collocated couple".into()));
        }
        let vol = self.grid.cell_volume();
        Ok(rho
            .values()
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let g2: f64 = self.grad.iter().map(|g| g[k] * g[k]).sum();
                r * (g2 + self.u[k] * self.u[k])
            })
            .sum::<f64>()
            * vol)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            u: self.u.iter().map(|v| v * factor).collect(),
            grad: self.grad.iter().map(|g| g.iter().map(|v| v * factor).collect()).collect(),
            layout: self.layout,
        }
    }

    pub fn max_grad_norm(&self) -> f64 {
        let n = self.grad.first().map_or(0, Vec::len);
        (0..n)
            .map(|k| self.grad.iter().map(|g| g[k] * g[k]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Total mass `Σ values · cellVolume`.
pub fn mass(rho: &GridMeasure) -> f64 {
    rho.mass()
}

/// Quadratic entropy `½ ∫ |ρ − m|²`.
pub fn entropy(rho: &GridMeasure, m: &GridMeasure) -> Result<f64> {
    rho.grid().check_same(m.grid())?;
    let sum: f64 = rho.values().iter().zip(m.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * sum * rho.grid().cell_volume())
}
