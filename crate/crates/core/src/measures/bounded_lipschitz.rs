use super::{GridMeasure, Layout, PotentialField};
use crate::error::{Error, Result};
use crate::grid::Grid;

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const MAX_INNER_ITERS: usize = 20_000;

/// Certified lower bound on the bounded-Lipschitz distance.
#[derive(Clone, Debug)]
pub struct BoundedLipschitz {
    /// `∫φ d(ρ₁ − ρ₀)` for the feasible witness.
    pub lower_bound: f64,
    /// Test function with `‖φ‖∞ + ‖D_h φ‖∞ ≤ 1`, gradient on faces.
    pub witness: PotentialField,
    /// Sup-norm share `‖φ‖∞ ≤ a` of the unit budget used by the witness.
    pub sup_budget: f64,
}

/// Lower bound on `sup { ∫φ d(ρ₁−ρ₀) : ‖φ‖∞ + ‖D_hφ‖∞ ≤ 1 }`.
///
/// The budget is split as `‖φ‖∞ ≤ a`, `‖D_hφ‖∞ ≤ 1 − a`. For a fixed split
/// the problem is a linear program over a box intersected with a slope
/// constraint, solved by diagonally preconditioned projected primal–dual
/// ascent; its dual objective bounds the inner value from above and stops the
/// iteration. The optimal value is concave in `a`, which is located by
/// golden-section search. Every reported value comes from a feasible `φ`.
pub fn bounded_lipschitz(rho0: &GridMeasure, rho1: &GridMeasure, tol: f64) -> Result<BoundedLipschitz> {
    rho0.grid().check_same(rho1.grid())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let grid = rho0.grid().clone();
    let vol = grid.cell_volume();
    let f: Vec<f64> = rho1.values().iter().zip(rho0.values()).map(|(a, b)| (a - b) * vol).collect();

    let mut solver = InnerSolver::new(&grid, &f);
    let total: f64 = f.iter().sum();

    // a = 1 forces φ constant; a = 0 forces φ = 0.
    let constant = vec![total.signum(); f.len()];
    let mut best = Candidate { value: total.abs(), phi: constant, a: 1.0 };

    let inner_tol = 0.1 * tol;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = solver.solve(x1, inner_tol);
    let mut f2 = solver.solve(x2, inner_tol);
    for c in [&f1, &f2] {
        if c.value > best.value {
            best = c.clone();
        }
    }
    let mut last = best.value;
    let mut stalled = 0;
    while hi - lo > 1e-10 {
        if f1.value >= f2.value {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = solver.solve(x1, inner_tol);
            if f1.value > best.value {
                best = f1.clone();
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = solver.solve(x2, inner_tol);
            if f2.value > best.value {
                best = f2.clone();
            }
        }
        if best.value - last < 1e-3 * tol {
            stalled += 1;
            if stalled >= 12 {
                break;
            }
        } else {
            stalled = 0;
        }
        last = best.value;
    }

    let grad = (0..grid.dim()).map(|a| grid.face_diff(&best.phi, a)).collect();
    let witness = PotentialField::new(grid, best.phi, grad, Layout::Staggered)?;
    Ok(BoundedLipschitz { lower_bound: best.value, witness, sup_budget: best.a })
}

#[derive(Clone, Debug)]
struct Candidate {
    value: f64,
    phi: Vec<f64>,
    a: f64,
}

/// Warm-started primal–dual solver for `max ⟨f,φ⟩, |φ| ≤ a, |Kφ| ≤ 1−a`.
struct InnerSolver<'g> {
    grid: &'g Grid,
    f: &'g [f64],
    phi: Vec<f64>,
    dual: Vec<Vec<f64>>,
    tau: Vec<f64>,
    sigma: Vec<f64>,
}

impl<'g> InnerSolver<'g> {
    fn new(grid: &'g Grid, f: &'g [f64]) -> Self {
        let dim = grid.dim();
        // Column sums of |K| give the primal steps, row sums the dual steps.
        let mut col = vec![0.0; grid.len()];
        for a in 0..dim {
            let ones = vec![1.0; grid.face_count(a)];
            let mut k = 0;
            grid.for_each_line(a, |first, stride, n| {
                for i in 0..n.saturating_sub(1) {
                    col[first + i * stride] += ones[k] / grid.spacing[a];
                    col[first + (i + 1) * stride] += ones[k] / grid.spacing[a];
                    k += 1;
                }
            });
        }
        let tau = col.iter().map(|&c| if c > 0.0 { 1.0 / c } else { 1.0 }).collect();
        let sigma = grid.spacing.iter().map(|h| h / 2.0).collect();
        Self {
            grid,
            f,
            phi: vec![0.0; grid.len()],
            dual: (0..dim).map(|a| vec![0.0; grid.face_count(a)]).collect(),
            tau,
            sigma,
        }
    }

    fn apply_k(&self, phi: &[f64]) -> Vec<Vec<f64>> {
        (0..self.grid.dim()).map(|a| self.grid.face_diff(phi, a)).collect()
    }

    fn apply_kt(&self, y: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (a, comp) in y.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.grid.face_diff_adjoint(comp, a)) {
                *o += v;
            }
        }
        out
    }

    /// Largest value of a feasible rescaling of `phi`.
    fn certify(&self, phi: &[f64], a: f64) -> Candidate {
        let slope = 1.0 - a;
        let mut phi: Vec<f64> = phi.iter().map(|v| v.clamp(-a, a)).collect();
        let kmax = self.apply_k(&phi).iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if kmax > slope {
            let scale = if kmax > 0.0 { slope / kmax } else { 0.0 };
            phi.iter_mut().for_each(|v| *v *= scale);
        }
        let value = phi.iter().zip(self.f).map(|(p, q)| p * q).sum();
        Candidate { value, phi, a }
    }

    fn dual_value(&self, a: f64) -> f64 {
        let kt = self.apply_kt(&self.dual);
        let r: f64 = self.f.iter().zip(&kt).map(|(f, k)| (f - k).abs()).sum();
        let y: f64 = self.dual.iter().flatten().map(|v| v.abs()).sum();
        a * r + (1.0 - a) * y
    }

    fn solve(&mut self, a: f64, tol: f64) -> Candidate {
        let slope = 1.0 - a;
        let mut best = self.certify(&self.phi, a);
        let mut bar = self.phi.clone();
        for iter in 0..MAX_INNER_ITERS {
            // dual ascent step: prox of the support function of the slope box
            let kb = self.apply_k(&bar);
            for (ax, (y, k)) in self.dual.iter_mut().zip(&kb).enumerate() {
                let s = self.sigma[ax];
                for (yi, ki) in y.iter_mut().zip(k) {
                    let v = *yi + s * ki;
                    *yi = v - s * (v / s).clamp(-slope, slope);
                }
            }
            // primal step: projection onto the sup-norm box
            let kt = self.apply_kt(&self.dual);
            let prev = self.phi.clone();
            for i in 0..self.phi.len() {
                self.phi[i] = (self.phi[i] + self.tau[i] * (self.f[i] - kt[i])).clamp(-a, a);
            }
            for i in 0..bar.len() {
                bar[i] = 2.0 * self.phi[i] - prev[i];
            }
            if iter % 20 == 19 {
                let cand = self.certify(&self.phi, a);
                if cand.value > best.value {
                    best = cand;
                }
                if self.dual_value(a) - best.value <= tol {
                    break;
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exact optimum of the 1D problem by exhaustive search over the lattice
    /// that contains every vertex of the feasible polytope.
    ///
    /// At a vertex each φᵢ equals `±a + k(1−a)h` and the split `a` is `0`, `1`
    /// or `mh/(2+mh)`; for each candidate split a max-sum dynamic program over
    /// the lattice values enforces the slope constraint between neighbours.
    fn lattice_oracle(f: &[f64], h: f64) -> f64 {
        let n = f.len() as i64;
        let mut splits = vec![0.0, 1.0];
        for m in 1..=(2 * n) {
            let mh = m as f64 * h;
            splits.push(mh / (2.0 + mh));
        }
        let mut best = f64::NEG_INFINITY;
        for &a in &splits {
            let c = (1.0 - a) * h;
            let mut levels: Vec<f64> = Vec::new();
            for sign in [-1.0, 1.0] {
                for k in -2 * n..=2 * n {
                    let v = sign * a + k as f64 * c;
                    if v.abs() <= a + 1e-12 {
                        levels.push(v.clamp(-a, a));
                    }
                }
            }
            levels.sort_by(|x, y| x.partial_cmp(y).unwrap());
            levels.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
            let mut score: Vec<f64> = levels.iter().map(|v| v * f[0]).collect();
            for fi in &f[1..] {
                score = levels
                    .iter()
                    .map(|v| {
                        let prev = levels
                            .iter()
                            .zip(&score)
                            .filter(|(w, _)| (*v - **w).abs() <= c + 1e-12)
                            .map(|(_, s)| *s)
                            .fold(f64::NEG_INFINITY, f64::max);
                        prev + v * fi
                    })
                    .collect();
            }
            best = best.max(score.into_iter().fold(f64::NEG_INFINITY, f64::max));
        }
        best
    }

    fn random_pair(rng: &mut ChaCha8Rng, grid: &Grid) -> (GridMeasure, GridMeasure) {
        let a = (0..grid.len()).map(|_| rng.gen::<f64>()).collect();
        let b = (0..grid.len()).map(|_| rng.gen::<f64>()).collect();
        (GridMeasure::new(grid.clone(), a).unwrap(), GridMeasure::new(grid.clone(), b).unwrap())
    }

    #[test]
    fn identical_measures_give_zero() {
        let g = Grid::interval(16, 0.0, 1.0).unwrap();
        let rho = GridMeasure::from_fn(g, |x| 1.0 + x[0]).unwrap();
        let bl = bounded_lipschitz(&rho, &rho, 1e-8).unwrap();
        assert!(bl.lower_bound.abs() < 1e-12);
    }

    #[test]
    fn mass_from_nothing_is_bounded_by_total_mass() {
        let g = Grid::interval(32, 0.0, 4.0).unwrap();
        let zero = GridMeasure::zeros(g.clone());
        let rho = GridMeasure::from_fn(g, |x| if (x[0] - 2.0).abs() < 0.3 { 2.0 } else { 0.0 }).unwrap();
        let bl = bounded_lipschitz(&zero, &rho, 1e-8).unwrap();
        assert!((bl.lower_bound - rho.mass()).abs() < 1e-9);
    }

    #[test]
    fn matches_lattice_oracle_on_eight_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (trial, width) in [1.0, 3.0, 8.0, 0.5].iter().enumerate() {
            let g = Grid::interval(8, 0.0, *width).unwrap();
            let (r0, r1) = random_pair(&mut rng, &g);
            let f: Vec<f64> =
                r1.values().iter().zip(r0.values()).map(|(a, b)| (a - b) * g.cell_volume()).collect();
            let oracle = lattice_oracle(&f, g.spacing[0]);
            let bl = bounded_lipschitz(&r0, &r1, 1e-6).unwrap();
            assert!(bl.lower_bound <= oracle + 1e-9, "trial {trial}: bound above optimum");
            assert!((bl.lower_bound - oracle).abs() < 1e-6, "trial {trial}: {} vs {oracle}", bl.lower_bound);
        }
    }

    #[test]
    fn witness_is_feasible_and_reproduces_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Grid::rectangle(6, 5, (0.0, 0.0), (2.0, 1.0)).unwrap();
        let (r0, r1) = random_pair(&mut rng, &g);
        let bl = bounded_lipschitz(&r0, &r1, 1e-6).unwrap();
        let w = &bl.witness;
        let sup = w.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lip = w.grad.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup + lip <= 1.0 + 1e-12);
        let value: f64 = w
            .u
            .iter()
            .zip(r1.values().iter().zip(r0.values()))
            .map(|(p, (a, b))| p * (a - b) * g.cell_volume())
            .sum();
        assert!((value - bl.lower_bound).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Grid::interval(24, 0.0, 3.0).unwrap();
        let tol = 1e-6;
        for _ in 0..3 {
            let (a, b) = random_pair(&mut rng, &g);
            let (c, _) = random_pair(&mut rng, &g);
            let ab = bounded_lipschitz(&a, &b, tol).unwrap().lower_bound;
            let ba = bounded_lipschitz(&b, &a, tol).unwrap().lower_bound;
            let bc = bounded_lipschitz(&b, &c, tol).unwrap().lower_bound;
            let ac = bounded_lipschitz(&a, &c, tol).unwrap().lower_bound;
            assert!((ab - ba).abs() <= 2.0 * tol);
            assert!(ac <= ab + bc + 2.0 * tol);
        }
    }

    #[test]
    fn rejects_mismatch_and_bad_tolerance() {
        let a = GridMeasure::zeros(Grid::interval(4, 0.0, 1.0).unwrap());
        let b = GridMeasure::zeros(Grid::interval(5, 0.0, 1.0).unwrap());
        assert!(matches!(bounded_lipschitz(&a, &b, 1e-6), Err(Error::GridMismatch(_))));
        assert!(bounded_lipschitz(&a, &a, 0.0).is_err());
    }
}
