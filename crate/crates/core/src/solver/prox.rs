/// Proximal map of the perspective `(|w|² + s²)/(2ρ)` with step `tau`.
///
/// Returns the minimizer of `(|w|²+s²)/(2ρ) + ‖(ρ,w,s) − (ρ̃,w̃,s̃)‖²/(2τ)`.
/// The momenta follow from the density as `m = ρ m̃/(ρ+τ)`, and the density is
/// the positive root of `(ρ−ρ̃)(ρ+τ)² = τ|m̃|²/2`. When no positive root exists
/// the minimizer is the origin. `w` is overwritten with the new momentum.
pub fn prox_energy(rho: f64, w: &mut [f64], s: f64, tau: f64) -> (f64, f64) {
    let m2: f64 = w.iter().map(|v| v * v).sum::<f64>() + s * s;
    // g(0) = −ρ̃τ² − τ|m̃|²/2 ≥ 0 means the cubic has no positive root
    if rho * tau + 0.5 * m2 <= 0.0 {
        w.iter_mut().for_each(|v| *v = 0.0);
        return (0.0, 0.0);
    }
    let r = density_root(rho, m2, tau);
    let scale = r / (r + tau);
    w.iter_mut().for_each(|v| *v *= scale);
    (r, s * scale)
}

/// Positive root of `g(ρ) = (ρ−ρ̃)(ρ+τ)² − τ|m̃|²/2`.
///
/// `g` is increasing and convex on `[max(ρ̃,0), ∞)`, so Newton started at the
/// upper bound `max(ρ̃,0) + |m̃|²/(2τ)` decreases monotonically to the root.
/// A bracket is kept as a safeguard against rounding.
fn density_root(rho: f64, m2: f64, tau: f64) -> f64 {
    let c = 0.5 * tau * m2;
    if c == 0.0 {
        return rho.max(0.0);
    }
    let g = |x: f64| (x - rho) * (x + tau) * (x + tau) - c;
    let mut lo = rho.max(0.0);
    let mut hi = lo + m2 / (2.0 * tau);
    let mut x = hi;
    for _ in 0..100 {
        let gx = g(x);
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dg = (x + tau) * (3.0 * x + tau - 2.0 * rho);
        let mut next = x - gx / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-13 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn objective(p: (f64, f64, f64), q: (f64, f64, f64), tau: f64) -> f64 {
        let energy = if p.0 > 0.0 {
            (p.1 * p.1 + p.2 * p.2) / (2.0 * p.0)
        } else if p.1 == 0.0 && p.2 == 0.0 && p.0 == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        energy + ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) + (p.2 - q.2).powi(2)) / (2.0 * tau)
    }

    fn prox(q: (f64, f64, f64), tau: f64) -> (f64, f64, f64) {
        let mut w = [q.1];
        let (r, s) = prox_energy(q.0, &mut w, q.2, tau);
        (r, w[0], s)
    }

    #[test]
    fn fixed_point_without_momentum() {
        assert_eq!(prox((0.7, 0.0, 0.0), 0.3), (0.7, 0.0, 0.0));
    }

    #[test]
    fn very_negative_density_collapses_to_origin() {
        assert_eq!(prox((-50.0, 0.1, -0.2), 1.0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn matches_lattice_search() {
        // Grid search over a 3D lattice around the returned point; no lattice
        // point may beat it, and the best lattice point lies within one spacing.
        for (q, tau) in [((0.5, 0.8, -0.3), 0.7), ((-0.2, 1.5, 0.4), 0.5), ((1.2, -0.4, 0.9), 2.0)] {
            let p = prox(q, tau);
            let best = objective(p, q, tau);
            let step = 2e-3;
            let mut arg = p;
            let mut min = f64::INFINITY;
            for i in -150..=150 {
                for j in -150..=150 {
                    for k in -150..=150 {
                        let c = (p.0 + i as f64 * step, p.1 + j as f64 * step, p.2 + k as f64 * step);
                        let v = objective(c, q, tau);
                        if v < min {
                            min = v;
                            arg = c;
                        }
                    }
                }
            }
            assert!(best <= min + 1e-12);
            assert!((arg.0 - p.0).abs() <= step && (arg.1 - p.1).abs() <= step && (arg.2 - p.2).abs() <= step);
        }
    }

    proptest! {
        #[test]
        fn satisfies_optimality(rho in -5.0f64..5.0, w in -5.0f64..5.0, s in -5.0f64..5.0, tau in 0.01f64..10.0) {
            let (r, pw, ps) = prox((rho, w, s), tau);
            prop_assert!(r >= 0.0);
            if r > 0.0 {
                // stationarity in every coordinate
                let gw = pw / r + (pw - w) / tau;
                let gs = ps / r + (ps - s) / tau;
                let gr = -(pw * pw + ps * ps) / (2.0 * r * r) + (r - rho) / tau;
                let scale = 1.0 + (rho.abs() + w.abs() + s.abs()) / tau;
                prop_assert!(gw.abs() < 1e-9 * scale && gs.abs() < 1e-9 * scale && gr.abs() < 1e-9 * scale);
            } else {
                prop_assert!(pw == 0.0 && ps == 0.0);
            }
        }

        #[test]
        fn is_nonexpansive(a in prop::array::uniform3(-3.0f64..3.0), b in prop::array::uniform3(-3.0f64..3.0), tau in 0.05f64..5.0) {
            let pa = prox((a[0], a[1], a[2]), tau);
            let pb = prox((b[0], b[1], b[2]), tau);
            let d_in = ((a[0]-b[0]).powi(2) + (a[1]-b[1]).powi(2) + (a[2]-b[2]).powi(2)).sqrt();
            let d_out = ((pa.0-pb.0).powi(2) + (pa.1-pb.1).powi(2) + (pa.2-pb.2).powi(2)).sqrt();
            prop_assert!(d_out <= d_in + 1e-10);
        }
    }
}
