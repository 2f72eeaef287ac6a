//! Uniform rectilinear cell grids in one or two dimensions.
//!
//! Values live at cell centers in row-major order (last axis fastest). The
//! difference operators here are shared by every module: collocated centered
//! differences with mirror ghost cells (no-flux), their exact adjoints, and
//! face-based differences used by finite-volume fluxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
}

impl Grid {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        let dim = shape.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidInput(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if spacing.len() != dim || origin.len() != dim {
            return Err(Error::InvalidInput(
                "shape, spacing and origin must have the same length".into(),
            ));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidInput("every axis needs at least one cell".into()));
        }
        if spacing.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
            return Err(Error::InvalidInput("spacing must be positive and finite".into()));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidInput("origin must be finite".into()));
        }
        Ok(Self { shape, spacing, origin })
    }

    /// `n` cells covering `[lo, hi]`.
    pub fn interval(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidInput(format!("empty interval [{lo}, {hi}]")));
        }
        Self::new(vec![n], vec![(hi - lo) / n as f64], vec![lo])
    }

    /// `nx × ny` cells covering `[lo.0, hi.0] × [lo.1, hi.1]`.
    pub fn rectangle(nx: usize, ny: usize, lo: (f64, f64), hi: (f64, f64)) -> Result<Self> {
        if !(hi.0 > lo.0 && hi.1 > lo.1) {
            return Err(Error::InvalidInput("empty rectangle".into()));
        }
        Self::new(
            vec![nx, ny],
            vec![(hi.0 - lo.0) / nx as f64, (hi.1 - lo.1) / ny as f64],
            vec![lo.0, lo.1],
        )
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.cell_volume() * self.len() as f64
    }

    /// Upper corner of the domain.
    pub fn upper(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.origin[a] + self.spacing[a] * self.shape[a] as f64)
            .collect()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    /// Index of cell `flat` along `axis`.
    pub fn coord(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.shape[axis]
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.origin[a] + (self.coord(flat, a) as f64 + 0.5) * self.spacing[a])
            .collect()
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        let close = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
        };
        if self.shape != other.shape
            || !close(&self.spacing, &other.spacing)
            || !close(&self.origin, &other.origin)
        {
            return Err(Error::GridMismatch(format!(
                "shape {:?} spacing {:?} origin {:?} vs shape {:?} spacing {:?} origin {:?}",
                self.shape, self.spacing, self.origin, other.shape, other.spacing, other.origin
            )));
        }
        Ok(())
    }

    /// Calls `f(first, stride, n)` once per grid line along `axis`.
    pub fn for_each_line(&self, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
        let n = self.shape[axis];
        let stride = self.stride(axis);
        let block = n * stride;
        for outer in 0..self.len() / block {
            for inner in 0..stride {
                f(outer * block + inner, stride, n);
            }
        }
    }

    /// Centered difference along `axis` with mirror ghost cells.
    pub fn centered_diff(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let h = self.spacing[axis];
        let mut out = vec![0.0; f.len()];
        self.for_each_line(axis, |first, stride, n| {
            if n < 2 {
                return;
            }
            for i in 0..n {
                let lo = if i == 0 { 0 } else { i - 1 };
                let hi = if i + 1 == n { n - 1 } else { i + 1 };
                out[first + i * stride] = (f[first + hi * stride] - f[first + lo * stride]) / (2.0 * h);
            }
        });
        out
    }

    /// Exact transpose of [`Grid::centered_diff`].
    pub fn centered_diff_adjoint(&self, g: &[f64], axis: usize) -> Vec<f64> {
        let h = self.spacing[axis];
        let mut out = vec![0.0; g.len()];
        self.for_each_line(axis, |first, stride, n| {
            if n < 2 {
                return;
            }
            let at = |i: usize| g[first + i * stride];
            for j in 0..n {
                let v = if j == 0 {
                    -at(0) - at(1)
                } else if j + 1 == n {
                    at(n - 2) + at(n - 1)
                } else {
                    at(j - 1) - at(j + 1)
                };
                out[first + j * stride] = v / (2.0 * h);
            }
        });
        out
    }

    /// Collocated gradient, one component per axis.
    pub fn gradient(&self, f: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|a| self.centered_diff(f, a)).collect()
    }

    /// Divergence defined as the negative adjoint of [`Grid::gradient`], so that
    /// `Σ u·div F = -Σ ∇u·F` holds exactly on the grid.
    pub fn divergence(&self, field: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (a, comp) in field.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.centered_diff_adjoint(comp, a)) {
                *o -= v;
            }
        }
        out
    }

    /// Three-point second difference along `axis` with mirror ghost cells.
    pub fn second_diff(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let h2 = self.spacing[axis] * self.spacing[axis];
        let mut out = vec![0.0; f.len()];
        self.for_each_line(axis, |first, stride, n| {
            if n < 2 {
                return;
            }
            for i in 0..n {
                let lo = if i == 0 { 0 } else { i - 1 };
                let hi = if i + 1 == n { n - 1 } else { i + 1 };
                let c = f[first + i * stride];
                out[first + i * stride] =
                    (f[first + hi * stride] - 2.0 * c + f[first + lo * stride]) / h2;
            }
        });
        out
    }

    /// Number of interior faces along `axis`.
    pub fn face_count(&self, axis: usize) -> usize {
        self.len() / self.shape[axis] * (self.shape[axis] - 1)
    }

    /// Forward differences across interior faces along `axis`.
    ///
    /// Faces are stored line by line in the same order as [`Grid::for_each_line`].
    pub fn face_diff(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let h = self.spacing[axis];
        let mut out = Vec::with_capacity(self.face_count(axis));
        self.for_each_line(axis, |first, stride, n| {
            for i in 0..n.saturating_sub(1) {
                out.push((f[first + (i + 1) * stride] - f[first + i * stride]) / h);
            }
        });
        out
    }

    /// Transpose of [`Grid::face_diff`].
    pub fn face_diff_adjoint(&self, g: &[f64], axis: usize) -> Vec<f64> {
        let h = self.spacing[axis];
        let mut out = vec![0.0; self.len()];
        let mut k = 0;
        self.for_each_line(axis, |first, stride, n| {
            for i in 0..n.saturating_sub(1) {
                out[first + (i + 1) * stride] += g[k] / h;
                out[first + i * stride] -= g[k] / h;
                k += 1;
            }
        });
        out
    }

    /// Arithmetic face average of a cell field along `axis`.
    pub fn face_mean(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.face_count(axis));
        self.for_each_line(axis, |first, stride, n| {
            for i in 0..n.saturating_sub(1) {
                out.push(0.5 * (f[first + (i + 1) * stride] + f[first + i * stride]));
            }
        });
        out
    }

    /// Transpose of [`Grid::face_mean`]: each cell receives half of each
    /// adjacent interior face value.
    pub fn face_mean_adjoint(&self, g: &[f64], axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut k = 0;
        self.for_each_line(axis, |first, stride, n| {
            for i in 0..n.saturating_sub(1) {
                out[first + (i + 1) * stride] += 0.5 * g[k];
                out[first + i * stride] += 0.5 * g[k];
                k += 1;
            }
        });
        out
    }

    /// Multilinear interpolation of a cell-centered field, clamped to the
    /// outermost cell centers.
    pub fn interpolate(&self, f: &[f64], x: &[f64]) -> f64 {
        let dim = self.dim();
        let mut lo = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..dim {
            let n = self.shape[a];
            let pos = (x[a] - self.origin[a]) / self.spacing[a] - 0.5;
            if n == 1 || pos <= 0.0 {
                lo[a] = 0;
                frac[a] = 0.0;
            } else if pos >= (n - 1) as f64 {
                lo[a] = n - 2;
                frac[a] = 1.0;
            } else {
                lo[a] = pos.floor() as usize;
                frac[a] = pos - lo[a] as f64;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..dim {
                let up = (corner >> a) & 1 == 1;
                let i = if up { (lo[a] + 1).min(self.shape[a] - 1) } else { lo[a] };
                w *= if up { frac[a] } else { 1.0 - frac[a] };
                flat += i * self.stride(a);
            }
            if w != 0.0 {
                acc += w * f[flat];
            }
        }
        acc
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let hi = self.upper();
        (0..self.dim()).all(|a| x[a] >= self.origin[a] && x[a] <= hi[a])
    }
}
