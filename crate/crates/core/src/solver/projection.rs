use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Unknowns of the discrete path on the staggered space-time grid.
///
/// `rho` holds the interior time faces `1..nt` (the two endpoint densities
/// are fixed), row by row with the spatial index fastest. `w[a]` holds the
/// momentum on the interior spatial faces of axis `a` for each time interval,
/// in [`Grid::face_diff`] order. `s` is the source on cell centers for each
/// time interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Staggered {
    pub rho: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub s: Vec<f64>,
}

impl Staggered {
    pub fn zeros(grid: &Grid, nt: usize) -> Self {
        Self {
            rho: vec![0.0; (nt - 1) * grid.len()],
            w: (0..grid.dim()).map(|a| vec![0.0; nt * grid.face_count(a)]).collect(),
            s: vec![0.0; nt * grid.len()],
        }
    }

    fn parts(&self) -> impl Iterator<Item = &Vec<f64>> {
        std::iter::once(&self.rho).chain(self.w.iter()).chain(std::iter::once(&self.s))
    }

    fn parts_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        std::iter::once(&mut self.rho).chain(self.w.iter_mut()).chain(std::iter::once(&mut self.s))
    }

    pub fn norm(&self) -> f64 {
        self.parts().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self ← a·self + b·other`.
    pub fn combine(&mut self, a: f64, other: &Staggered, b: f64) {
        for (x, y) in self.parts_mut().zip(other.parts()) {
            x.par_iter_mut().zip(y.par_iter()).for_each(|(x, y)| *x = a * *x + b * *y);
        }
    }

    pub fn distance(&self, other: &Staggered) -> f64 {
        self.parts()
            .zip(other.parts())
            .flat_map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preconditioner {
    /// Inverse of the diagonal of the normal operator.
    Jacobi,
    /// Exact inverse through cosine transforms along every axis.
    Spectral,
}

/// Orthonormal DCT-II, which diagonalizes the Neumann second difference.
struct Dct {
    n: usize,
    mat: Vec<f64>,
}

impl Dct {
    fn new(n: usize) -> Self {
        let mut mat = vec![0.0; n * n];
        for k in 0..n {
            let norm = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            for j in 0..n {
                mat[k * n + j] = norm * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos();
            }
        }
        Self { n, mat }
    }

    fn apply(&self, x: &[f64], y: &mut [f64], inverse: bool) {
        let n = self.n;
        for (k, yk) in y.iter_mut().enumerate().take(n) {
            *yk = if inverse {
                (0..n).map(|j| self.mat[j * n + k] * x[j]).sum()
            } else {
                (0..n).map(|j| self.mat[k * n + j] * x[j]).sum()
            };
        }
    }
}

/// Eigenvalues `(4/h²) sin²(πk/2n)` of the Neumann second difference.
fn neumann_eigenvalues(n: usize, h: f64) -> Vec<f64> {
    (0..n).map(|k| 4.0 / (h * h) * (PI * k as f64 / (2.0 * n as f64)).sin().powi(2)).collect()
}

/// Euclidean projection onto `{ D_tρ + div w − s = 0 }` with both endpoint
/// densities fixed and no flux through the spatial boundary.
///
/// The correction is `Aᵀλ` with `AAᵀλ = r`, where `AAᵀ` is the sum of the
/// Neumann second differences in time and space plus the identity. The
/// system is solved by preconditioned conjugate gradients to a relative
/// residual of `tol`.
pub struct ContinuityProjector {
    grid: Grid,
    nt: usize,
    dt: f64,
    rho0: Vec<f64>,
    rho1: Vec<f64>,
    time_dct: Dct,
    space_dct: Vec<Dct>,
    /// `λ_t(k) + Σ_a λ_a(i_a) + 1` for every space-time index.
    spectrum: Vec<f64>,
    diagonal: Vec<f64>,
    pub preconditioner: Preconditioner,
    pub tol: f64,
    pub max_cg_iter: usize,
}

impl ContinuityProjector {
    pub fn new(grid: &Grid, nt: usize, rho0: &[f64], rho1: &[f64]) -> Result<Self> {
        if nt < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 time steps, got {nt}")));
        }
        if rho0.len() != grid.len() || rho1.len() != grid.len() {
            return Err(Error::GridMismatch("endpoint densities do not match the grid".into()));
        }
        let dt = 1.0 / nt as f64;
        let n = grid.len();
        let eig_t = neumann_eigenvalues(nt, dt);
        let eig_space: Vec<Vec<f64>> =
            (0..grid.dim()).map(|a| neumann_eigenvalues(grid.shape[a], grid.spacing[a])).collect();
        let diag_t: Vec<f64> = (0..nt).map(|k| if k == 0 || k + 1 == nt { 1.0 } else { 2.0 } / (dt * dt)).collect();
        let mut space_sum = vec![0.0; n];
        let mut space_diag = vec![0.0; n];
        for i in 0..n {
            for a in 0..grid.dim() {
                let c = grid.coord(i, a);
                let na = grid.shape[a];
                space_sum[i] += eig_space[a][c];
                let neighbours = if na < 2 {
                    0.0
                } else if c == 0 || c + 1 == na {
                    1.0
                } else {
                    2.0
                };
                space_diag[i] += neighbours / (grid.spacing[a] * grid.spacing[a]);
            }
        }
        let spectrum = (0..nt * n).map(|idx| eig_t[idx / n] + space_sum[idx % n] + 1.0).collect();
        let diagonal = (0..nt * n).map(|idx| diag_t[idx / n] + space_diag[idx % n] + 1.0).collect();
        Ok(Self {
            grid: grid.clone(),
            nt,
            dt,
            rho0: rho0.to_vec(),
            rho1: rho1.to_vec(),
            time_dct: Dct::new(nt),
            space_dct: grid.shape.iter().map(|&n| Dct::new(n)).collect(),
            spectrum,
            diagonal,
            preconditioner: Preconditioner::Spectral,
            tol: 1e-10,
            max_cg_iter: 500,
        })
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn endpoints(&self) -> (&[f64], &[f64]) {
        (&self.rho0, &self.rho1)
    }

    /// Linear part `A v` of the continuity operator (endpoints taken as zero).
    fn apply_a(&self, v: &Staggered) -> Vec<f64> {
        let n = self.grid.len();
        let nt = self.nt;
        let mut out = vec![0.0; nt * n];
        out.par_chunks_mut(n).enumerate().for_each(|(k, row)| {
            if k + 1 < nt {
                for (o, r) in row.iter_mut().zip(&v.rho[k * n..(k + 1) * n]) {
                    *o += r / self.dt;
                }
            }
            if k > 0 {
                for (o, r) in row.iter_mut().zip(&v.rho[(k - 1) * n..k * n]) {
                    *o -= r / self.dt;
                }
            }
            for (a, w) in v.w.iter().enumerate() {
                let f = self.grid.face_count(a);
                let div = self.grid.face_diff_adjoint(&w[k * f..(k + 1) * f], a);
                for (o, d) in row.iter_mut().zip(div) {
                    *o -= d;
                }
            }
            for (o, s) in row.iter_mut().zip(&v.s[k * n..(k + 1) * n]) {
                *o -= s;
            }
        });
        out
    }

    fn apply_at(&self, r: &[f64]) -> Staggered {
        let n = self.grid.len();
        let nt = self.nt;
        let mut out = Staggered::zeros(&self.grid, nt);
        out.rho.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            // interior time face j+1 sits between intervals j and j+1
            for i in 0..n {
                row[i] = (r[j * n + i] - r[(j + 1) * n + i]) / self.dt;
            }
        });
        for (a, w) in out.w.iter_mut().enumerate() {
            let f = self.grid.face_count(a);
            w.par_chunks_mut(f).enumerate().for_each(|(k, chunk)| {
                let d = self.grid.face_diff(&r[k * n..(k + 1) * n], a);
                for (c, v) in chunk.iter_mut().zip(d) {
                    *c = -v;
                }
            });
        }
        out.s.iter_mut().zip(r).for_each(|(s, r)| *s = -r);
        out
    }

    /// Continuity residual `D_tρ + div w − s` including the endpoint densities.
    pub fn residual(&self, v: &Staggered) -> Vec<f64> {
        let n = self.grid.len();
        let mut r = self.apply_a(v);
        for i in 0..n {
            r[i] -= self.rho0[i] / self.dt;
            r[(self.nt - 1) * n + i] += self.rho1[i] / self.dt;
        }
        r
    }

    fn normal_op(&self, x: &[f64]) -> Vec<f64> {
        self.apply_a(&self.apply_at(x))
    }

    fn transform(&self, x: &mut [f64], inverse: bool) {
        let n = self.grid.len();
        let nt = self.nt;
        // time axis: columns of the (nt × n) array
        let mut out = vec![0.0; x.len()];
        out.par_chunks_mut(n).enumerate().for_each(|(k, row)| {
            for j in 0..nt {
                let c = if inverse { self.time_dct.mat[j * nt + k] } else { self.time_dct.mat[k * nt + j] };
                if c != 0.0 {
                    for (o, v) in row.iter_mut().zip(&x[j * n..(j + 1) * n]) {
                        *o += c * v;
                    }
                }
            }
        });
        x.copy_from_slice(&out);
        // spatial axes, row by row
        x.par_chunks_mut(n).for_each(|row| {
            for (a, dct) in self.space_dct.iter().enumerate() {
                let mut line = vec![0.0; dct.n];
                let mut res = vec![0.0; dct.n];
                let grid = &self.grid;
                grid.for_each_line(a, |first, stride, len| {
                    for i in 0..len {
                        line[i] = row[first + i * stride];
                    }
                    dct.apply(&line, &mut res, inverse);
                    for i in 0..len {
                        row[first + i * stride] = res[i];
                    }
                });
            }
        });
    }

    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        match self.preconditioner {
            Preconditioner::Jacobi => r.iter().zip(&self.diagonal).map(|(r, d)| r / d).collect(),
            Preconditioner::Spectral => {
                let mut z = r.to_vec();
                self.transform(&mut z, false);
                z.iter_mut().zip(&self.spectrum).for_each(|(z, e)| *z /= e);
                self.transform(&mut z, true);
                z
            }
        }
    }

    /// Solves `AAᵀλ = b`; returns the solution and the iteration count.
    fn solve_normal(&self, b: &[f64]) -> Result<(Vec<f64>, usize)> {
        let bnorm = norm(b);
        let mut x = vec![0.0; b.len()];
        if bnorm == 0.0 {
            return Ok((x, 0));
        }
        let mut r = b.to_vec();
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for iter in 1..=self.max_cg_iter {
            let ap = self.normal_op(&p);
            let alpha = rz / dot(&p, &ap);
            x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
            r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
            let rel = norm(&r) / bnorm;
            if !rel.is_finite() {
                return Err(Error::NonFinite("conjugate gradient residual".into()));
            }
            if rel <= self.tol {
                return Ok((x, iter));
            }
            z = self.precondition(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        }
        let rel = norm(&r) / bnorm;
        Err(Error::CgNonConvergence { iterations: self.max_cg_iter, residual: rel })
    }

    /// Projects `v` onto the constraint set in place; returns the number of
    /// conjugate-gradient iterations.
    pub fn project(&self, v: &mut Staggered) -> Result<usize> {
        let r = self.residual(v);
        let (lambda, iters) = self.solve_normal(&r)?;
        let corr = self.apply_at(&lambda);
        v.combine(1.0, &corr, -1.0);
        Ok(iters)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::par::sum(a.len(), |i| a[i] * b[i])
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
