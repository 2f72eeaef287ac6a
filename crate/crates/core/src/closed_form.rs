//! Exact distances and geodesics: mass squeezed to zero, proportional
//! measures, and pairs of one-point measures.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::measures::{GridMeasure, PotentialField};
use crate::solver::SpaceTimePath;

/// `d(ρ, 0) = 2√m₀`.
pub fn dist_to_zero(m0: f64) -> f64 {
    2.0 * m0.max(0.0).sqrt()
}

/// `d(ρ, λρ) = 2√m₀ |1 − √λ|`.
pub fn dist_proportional(m0: f64, lambda: f64) -> f64 {
    2.0 * m0.max(0.0).sqrt() * (1.0 - lambda.max(0.0).sqrt()).abs()
}

/// Geodesic `ρ_t = (1−t)²ρ₀` to the zero measure, driven by
/// `u_t = −2/(1−t)`, `∇u_t = 0`, sampled on `nt` uniform intervals.
///
/// The potential of each interval is taken at its midpoint and the interval
/// energy uses the mean of the two node densities.
pub fn squeeze_path(rho0: &GridMeasure, nt: usize) -> Result<SpaceTimePath> {
    if nt == 0 {
        return Err(Error::InvalidInput("squeeze path needs at least one interval".into()));
    }
    let grid = rho0.grid().clone();
    let times: Vec<f64> = (0..=nt).map(|k| k as f64 / nt as f64).collect();
    let densities = times
        .iter()
        .map(|t| rho0.scaled((1.0 - t) * (1.0 - t)))
        .collect::<Result<Vec<_>>>()?;
    let potentials = (0..nt)
        .map(|k| {
            let tm = 0.5 * (times[k] + times[k + 1]);
            let u = vec![-2.0 / (1.0 - tm); grid.len()];
            let grad = vec![vec![0.0; grid.len()]; grid.dim()];
            PotentialField::new(grid.clone(), u, grad, crate::measures::Layout::Collocated)
        })
        .collect::<Result<Vec<_>>>()?;
    SpaceTimePath::from_frames(times, densities, potentials)
}

/// Charges `k0`, `k1` at two points a distance `xi` apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracPairProblem {
    pub k0: f64,
    pub k1: f64,
    pub xi: f64,
}

impl DiracPairProblem {
    pub fn new(k0: f64, k1: f64, xi: f64) -> Result<Self> {
        for (name, v) in [("k0", k0), ("k1", k1), ("xi", xi)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
            if v < 0.0 {
                return Err(Error::InvalidInput(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(Self { k0, k1, xi })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One particle travels and changes charge on the way.
    Transport,
    /// Mass is destroyed at the source and created at the target.
    Stationary,
    /// Critical separation: every split between the two has the same cost.
    Mixed,
}

/// Charge profile `k_t = a(t−b)² + c` of the travelling particle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportArc {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TransportArc {
    /// Minimizer of the single-particle energy between charges `g0`, `g1`.
    pub fn new(g0: f64, g1: f64, xi: f64) -> Self {
        let cos = (xi / 2.0).cos();
        let root = (g0 * g1).sqrt();
        let a = g0 + g1 - 2.0 * cos * root;
        if a <= 0.0 {
            // equal charges at zero separation: the particle never changes
            return Self { a: 0.0, b: 0.5, c: g0 };
        }
        let sin = (xi / 2.0).sin();
        Self { a, b: (g0 - cos * root) / a, c: g0 * g1 * sin * sin / a }
    }

    pub fn charge(&self, t: f64) -> f64 {
        self.a * (t - self.b).powi(2) + self.c
    }

    /// Distance travelled along the segment at time `t`.
    pub fn arc(&self, t: f64) -> f64 {
        if self.c <= 0.0 {
            return 0.0;
        }
        let r = (self.a / self.c).sqrt();
        2.0 * (((t - self.b) * r).atan() + (self.b * r).atan())
    }

    /// `E_tr = 4a`.
    pub fn energy(&self) -> f64 {
        4.0 * self.a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracGeodesic {
    pub strategy: Strategy,
    /// Charge leaving `x₀` on the travelling particle.
    pub gamma0: f64,
    /// Charge of the travelling particle on arrival at `x₁`.
    pub gamma1: f64,
    pub xi: f64,
    /// Present whenever a particle travels.
    pub transport: Option<TransportArc>,
}

impl DiracGeodesic {
    /// Charge and arc position `s` of the travelling particle, with
    /// `x_t = x₀ + (x₁−x₀)s/ξ`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        dirac_geodesic_eval(self, t)
    }
}

/// Transport cost `4a` of moving the full charges; finite for `ξ < 2π` but
/// only optimal for `ξ ≤ π`.
pub fn transport_energy(k0: f64, k1: f64, xi: f64) -> f64 {
    TransportArc::new(k0, k1, xi).energy()
}

/// Cost of moving `g0 → g1` while destroying `k0−g0` and creating `k1−g1` in place.
pub fn mixed_energy(k0: f64, k1: f64, xi: f64, g0: f64, g1: f64) -> f64 {
    4.0 * (k0 + k1 - 2.0 * (xi / 2.0).cos() * (g0 * g1).sqrt())
}

/// Separations this close to `π` count as critical, so that `π` typed to eight
/// decimals is labelled mixed. `d²` itself is continuous across the band.
pub const CRITICAL_BAND: f64 = 1e-8;

/// `d²(k₀δ_{x₀}, k₁δ_{x₁}) = 4(k₀+k₁−2cos(ξ̄/2)√(k₀k₁))`, `ξ̄ = min(ξ, π)`, with the
/// corresponding geodesic.
pub fn dirac_distance(p: &DiracPairProblem) -> Result<(f64, DiracGeodesic)> {
    let DiracPairProblem { k0, k1, xi } = DiracPairProblem::new(p.k0, p.k1, p.xi)?;
    if k0 == 0.0 || k1 == 0.0 {
        // one side is empty: pure creation or destruction
        let d = dist_to_zero(k0 + k1);
        let geo = DiracGeodesic { strategy: Strategy::Stationary, gamma0: 0.0, gamma1: 0.0, xi, transport: None };
        return Ok((d * d, geo));
    }
    if xi == 0.0 {
        let d = dist_proportional(k0, k1 / k0);
        let arc = TransportArc::new(k0, k1, 0.0);
        let geo = DiracGeodesic { strategy: Strategy::Transport, gamma0: k0, gamma1: k1, xi, transport: Some(arc) };
        return Ok((d * d, geo));
    }
    let strategy = if (xi - PI).abs() <= CRITICAL_BAND {
        Strategy::Mixed
    } else if xi < PI {
        Strategy::Transport
    } else {
        Strategy::Stationary
    };
    // cos(ξ̄/2) vanishes for ξ̄ = π; set it exactly so d² is flat from π on
    let d2 = if xi < PI { 4.0 * (k0 + k1 - 2.0 * (xi / 2.0).cos() * (k0 * k1).sqrt()) } else { 4.0 * (k0 + k1) };
    let geo = match strategy {
        Strategy::Stationary => DiracGeodesic { strategy, gamma0: 0.0, gamma1: 0.0, xi, transport: None },
        _ => DiracGeodesic { strategy, gamma0: k0, gamma1: k1, xi, transport: Some(TransportArc::new(k0, k1, xi)) },
    };
    Ok((d2, geo))
}

/// Charge `k_t` and arc position `s_t` of the travelling particle.
pub fn dirac_geodesic_eval(geo: &DiracGeodesic, t: f64) -> Result<(f64, f64)> {
    let arc = geo.transport.ok_or(Error::NoTransport)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("time {t} outside [0, 1]")));
    }
    Ok((arc.charge(t), arc.arc(t)))
}

/// `W₂² − d²` for unit charges: `ξ² − (8 − 8cos(ξ/2))`.
pub fn w2_vs_d_gap(xi: f64) -> f64 {
    // 8 − 8cos(ξ/2) = 16 sin²(ξ/4), which avoids cancellation at small ξ
    let s = (xi / 4.0).sin();
    xi * xi - 16.0 * s * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::{prop_assert, proptest};

    fn d2(k0: f64, k1: f64, xi: f64) -> (f64, DiracGeodesic) {
        dirac_distance(&DiracPairProblem::new(k0, k1, xi).unwrap()).unwrap()
    }

    #[test]
    fn distance_to_zero_and_scaling() {
        assert_eq!(dist_to_zero(1.0), 2.0);
        assert_eq!(dist_to_zero(0.0), 0.0);
        assert_eq!(dist_to_zero(4.0), 4.0);
        assert_eq!(dist_proportional(1.0, 1.0), 0.0);
        assert_eq!(dist_proportional(1.0, 4.0), 2.0);
        assert_eq!(dist_proportional(1.0, 0.0), dist_to_zero(1.0));
    }

    #[test]
    fn dirac_examples() {
        let (v, g) = d2(1.0, 1.0, PI / 2.0);
        assert!((v - (8.0 - 4.0 * 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(g.strategy, Strategy::Transport);
        for xi in [PI + 1e-7, 4.0, 10.0] {
            let (v, g) = d2(1.0, 1.0, xi);
            assert_eq!(v, 8.0);
            assert_eq!(g.strategy, Strategy::Stationary);
            assert!(g.eval(0.5).is_err());
        }
        let (v, g) = d2(1.0, 1.0, PI);
        assert!((v - 8.0).abs() < 1e-12);
        assert_eq!(g.strategy, Strategy::Mixed);
        // π to eight decimals, as typed on a command line
        #[allow(clippy::approx_constant)]
        let typed = 3.14159265;
        assert_eq!(d2(1.0, 1.0, typed).1.strategy, Strategy::Mixed);
        assert_eq!(d2(1.0, 1.0, PI - 1e-7).1.strategy, Strategy::Transport);
        assert_eq!((g.gamma0, g.gamma1), (1.0, 1.0));
        let (v, _) = d2(4.0, 1.0, 0.0);
        assert!((v - 4.0).abs() < 1e-12);
        assert!((v.sqrt() - dist_proportional(4.0, 0.25)).abs() < 1e-12);
    }

    #[test]
    fn empty_side_reduces_to_squeeze() {
        let (v, g) = d2(3.0, 0.0, 1.0);
        assert!((v - 12.0).abs() < 1e-12);
        assert_eq!(g.strategy, Strategy::Stationary);
        assert_eq!(d2(0.0, 0.0, 2.0).0, 0.0);
    }

    #[test]
    fn quarter_turn_geodesic_values() {
        let (_, g) = d2(1.0, 1.0, PI / 2.0);
        let arc = g.transport.unwrap();
        let r2 = 2f64.sqrt();
        assert!((arc.a - (2.0 - r2)).abs() < 1e-15);
        assert!((arc.b - 0.5).abs() < 1e-15);
        assert!((arc.c - (2.0 + r2) / 4.0).abs() < 1e-15);
        let (k, s) = g.eval(0.0).unwrap();
        assert!((k - 1.0).abs() < 1e-12 && s.abs() < 1e-15);
        let (k, s) = g.eval(1.0).unwrap();
        assert!((k - 1.0).abs() < 1e-12 && (s - PI / 2.0).abs() < 1e-12);
        for t in [0.1, 0.3, 0.45] {
            assert!((arc.charge(t) - arc.charge(1.0 - t)).abs() < 1e-15);
        }
    }

    #[test]
    fn critical_separation_is_degenerate_in_the_split() {
        for (k0, k1) in [(1.0, 1.0), (2.0, 0.5), (0.3, 7.0)] {
            let target = 4.0 * (k0 + k1);
            for i in 0..=10 {
                for j in 0..=10 {
                    let e = mixed_energy(k0, k1, PI, k0 * i as f64 / 10.0, k1 * j as f64 / 10.0);
                    assert!((e - target).abs() < 1e-12 * target);
                }
            }
        }
    }

    #[test]
    fn transport_cost_is_exposed_beyond_threshold() {
        let (v, _) = d2(1.0, 1.0, 4.0);
        assert!(transport_energy(1.0, 1.0, 4.0) > v);
        assert!((transport_energy(1.0, 1.0, 1.0) - d2(1.0, 1.0, 1.0).0).abs() < 1e-12);
    }

    #[test]
    fn gap_values() {
        let g = w2_vs_d_gap(PI / 2.0);
        assert!((g - (PI * PI / 4.0 - 8.0 + 4.0 * 2f64.sqrt())).abs() < 1e-12);
        assert!((g - 0.124255).abs() < 1e-6);
        // ξ⁴/48 − ξ⁶/3840 + …: the leading coefficient is recovered as ξ → 0
        for xi in [1e-2, 1e-3] {
            assert!((w2_vs_d_gap(xi) * 48.0 / xi.powi(4) - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn squeeze_path_energy_converges() {
        let g = Grid::interval(4, 0.0, 1.0).unwrap();
        let rho = GridMeasure::from_fn(g, |x| 1.0 + x[0]).unwrap();
        let m0 = rho.mass();
        let err = |nt| (squeeze_path(&rho, nt).unwrap().total_energy() - 4.0 * m0).abs();
        let (e1, e2) = (err(100), err(1000));
        assert!(e2 < e1 && e2 < 0.05 * m0);
        let path = squeeze_path(&rho, 10).unwrap();
        assert!(path.densities.last().unwrap().mass().abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_input() {
        assert!(DiracPairProblem::new(-1.0, 1.0, 1.0).is_err());
        assert!(DiracPairProblem::new(1.0, 1.0, f64::NAN).is_err());
        let bad = DiracPairProblem { k0: 1.0, k1: -1.0, xi: 0.5 };
        assert!(dirac_distance(&bad).is_err());
    }

    proptest! {
        #[test]
        fn scaling_law(k0 in 0.01f64..10.0, k1 in 0.01f64..10.0, xi in 0.0f64..7.0, lambda in 0.01f64..10.0) {
            let base = d2(k0, k1, xi).0;
            let scaled = d2(lambda * k0, lambda * k1, xi).0;
            prop_assert!((scaled - lambda * base).abs() <= 1e-12 * (1.0 + lambda * base));
        }

        #[test]
        fn endpoint_identities(k0 in 0.01f64..10.0, k1 in 0.01f64..10.0, xi in 0.01f64..PI) {
            let (_, g) = d2(k0, k1, xi);
            let arc = g.transport.unwrap();
            prop_assert!((arc.charge(0.0) - g.gamma0).abs() <= 1e-12 * (1.0 + k0));
            prop_assert!((arc.charge(1.0) - g.gamma1).abs() <= 1e-12 * (1.0 + k1));
            prop_assert!((arc.arc(1.0) - xi).abs() <= 1e-12);
            prop_assert!((arc.energy() - d2(k0, k1, xi).0).abs() <= 1e-12 * (1.0 + k0 + k1));
        }

        #[test]
        fn continuous_at_threshold(k0 in 0.01f64..10.0, k1 in 0.01f64..10.0) {
            let left = d2(k0, k1, PI * (1.0 - 1e-12)).0;
            let at = d2(k0, k1, PI).0;
            let right = d2(k0, k1, PI * (1.0 + 1e-12)).0;
            prop_assert!((left - at).abs() <= 1e-10 * at);
            prop_assert!(at == right);
        }

        #[test]
        fn gap_is_positive(xi in 1e-3f64..PI) {
            prop_assert!(w2_vs_d_gap(xi) > 0.0);
        }
    }
}
