//! Charged particles: position and log-charge integrated along a potential,
//! and the free Euler–Lagrange flow of the single-particle energy.

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{DiracGeodesic, TransportArc};
use crate::error::{Error, Result};

/// Time-dependent potential known in closed form.
pub trait Potential: Sync {
    fn value(&self, t: f64, x: &[f64]) -> f64;
    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]);
}

/// Potential built from a value closure and a gradient closure.
pub struct FnPotential<U, G> {
    pub value: U,
    pub gradient: G,
}

impl<U, G> Potential for FnPotential<U, G>
where
    U: Fn(f64, &[f64]) -> f64 + Sync,
    G: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        (self.value)(t, x)
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.gradient)(t, x, out)
    }
}

/// `u ≡ c`: particles stay put and charges grow like `e^{ct}`.
pub struct ConstantPotential(pub f64);

impl Potential for ConstantPotential {
    fn value(&self, _: f64, _: &[f64]) -> f64 {
        self.0
    }

    fn gradient(&self, _: f64, _: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// `u_t = −2/(1−t)`, which squeezes every charge to zero at `t = 1`.
pub struct SqueezePotential;

impl Potential for SqueezePotential {
    fn value(&self, t: f64, _: &[f64]) -> f64 {
        -2.0 / (1.0 - t)
    }

    fn gradient(&self, _: f64, _: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: Vec<f64>,
    pub k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub particles: Vec<Particle>,
    pub time: f64,
}

/// Position, charge and their rates `x′`, `(log k)′` at one sample time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSample {
    pub x: Vec<f64>,
    pub k: f64,
    pub velocity: Vec<f64>,
    pub rate: f64,
}

/// Samples `frames[j][i]` of particle `ids[i]` at `times[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub ids: Vec<usize>,
    pub frames: Vec<Vec<ParticleSample>>,
}

impl Trajectory {
    /// CSV with header `t,particle_id,x0[,x1…],k`, ten significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let dim = self.frames.first().and_then(|f| f.first()).map_or(1, |s| s.x.len());
        let mut header = String::from("t,particle_id");
        for a in 0..dim {
            header.push_str(&format!(",x{a}"));
        }
        writeln!(out, "{header},k")?;
        for (t, frame) in self.times.iter().zip(&self.frames) {
            for (id, s) in self.ids.iter().zip(frame) {
                write!(out, "{t:.9e},{id}")?;
                for x in &s.x {
                    write!(out, ",{x:.9e}")?;
                }
                writeln!(out, ",{:.9e}", s.k)?;
            }
        }
        Ok(())
    }
}

/// Uniform steps covering `[t0, t_end]` with spacing at most `dt`.
fn steps(t0: f64, t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    if !(t_end >= t0) {
        return Err(Error::InvalidInput(format!("end time {t_end} precedes start time {t0}")));
    }
    let n = (((t_end - t0) / dt) - 1e-9).ceil().max(0.0) as usize;
    Ok((n, if n == 0 { 0.0 } else { (t_end - t0) / n as f64 }))
}

fn check_box(x: &[f64], bounds: Option<&[(f64, f64)]>) -> bool {
    bounds.is_none_or(|b| x.iter().zip(b).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi))
}

/// Integrates `x′ = ∇u(t,x)`, `(log k)′ = u(t,x)` with classical RK4 for each
/// particle. Particles with nonpositive charge are dropped. A particle leaving
/// `bounds` (one `(lo, hi)` pair per axis) aborts the run.
pub fn integrate_particles(
    init: &ParticleState,
    u: &dyn Potential,
    t_end: f64,
    dt: f64,
    bounds: Option<&[(f64, f64)]>,
) -> Result<Trajectory> {
    let (n, h) = steps(init.time, t_end, dt)?;
    let mut ids = Vec::new();
    for (i, p) in init.particles.iter().enumerate() {
        if p.k > 0.0 && p.k.is_finite() {
            ids.push(i);
        } else {
            warn!("dropping particle {i} with charge {}", p.k);
        }
    }
    let sample = |t: f64, x: Vec<f64>, lk: f64| {
        let mut velocity = vec![0.0; x.len()];
        u.gradient(t, &x, &mut velocity);
        let rate = u.value(t, &x);
        ParticleSample { x, k: lk.exp(), velocity, rate }
    };
    let paths: Vec<Vec<ParticleSample>> = ids
        .par_iter()
        .map(|&id| {
            let p = &init.particles[id];
            let dim = p.x.len();
            let mut x = p.x.clone();
            let mut lk = p.k.ln();
            let mut out = Vec::with_capacity(n + 1);
            out.push(sample(init.time, x.clone(), lk));
            let mut tmp = vec![0.0; dim];
            let mut kx = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
            let mut kl = [0.0; 4];
            for step in 0..n {
                let t = init.time + step as f64 * h;
                for stage in 0..4 {
                    let (ts, frac) = match stage {
                        0 => (t, 0.0),
                        1 | 2 => (t + 0.5 * h, 0.5 * h),
                        _ => (t + h, h),
                    };
                    for a in 0..dim {
                        tmp[a] = if stage == 0 { x[a] } else { x[a] + frac * kx[stage - 1][a] };
                    }
                    kl[stage] = u.value(ts, &tmp);
                    u.gradient(ts, &tmp, &mut kx[stage]);
                }
                for a in 0..dim {
                    x[a] += h / 6.0 * (kx[0][a] + 2.0 * kx[1][a] + 2.0 * kx[2][a] + kx[3][a]);
                }
                lk += h / 6.0 * (kl[0] + 2.0 * kl[1] + 2.0 * kl[2] + kl[3]);
                let t_next = init.time + (step + 1) as f64 * h;
                if !lk.is_finite() || x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("particle {id} at t = {t_next}")));
                }
                if !check_box(&x, bounds) {
                    return Err(Error::OutOfBounds { particle: id, t: t_next });
                }
                out.push(sample(t_next, x.clone(), lk));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let times = (0..=n).map(|j| init.time + j as f64 * h).collect();
    Ok(transpose(times, ids, paths))
}

fn transpose(times: Vec<f64>, ids: Vec<usize>, paths: Vec<Vec<ParticleSample>>) -> Trajectory {
    let n = times.len();
    let mut frames: Vec<Vec<ParticleSample>> = (0..n).map(|_| Vec::with_capacity(ids.len())).collect();
    for path in paths {
        for (frame, s) in frames.iter_mut().zip(path) {
            frame.push(s);
        }
    }
    Trajectory { times, ids, frames }
}

/// Initial data for the free particle flow: position, velocity `x′`, charge and
/// log-charge rate `(log k)′`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeParticle {
    pub x: Vec<f64>,
    pub velocity: Vec<f64>,
    pub k: f64,
    pub rate: f64,
}

impl FreeParticle {
    /// Initial data of the travelling particle of a one-point geodesic in one
    /// dimension, with arc length as the coordinate.
    pub fn from_dirac(geo: &DiracGeodesic) -> Result<Self> {
        let arc = geo.transport.ok_or(Error::NoTransport)?;
        let (ds, _) = arc_rates(&arc, 0.0);
        let k = arc.charge(0.0);
        Ok(Self { x: vec![0.0], velocity: vec![ds], k, rate: 2.0 * arc.a * (0.0 - arc.b) / k })
    }
}

/// Integrates the Euler–Lagrange equations of `∫ k′²/k + k|x′|²` with RK4 in
/// the variables `(x, log k, (log k)′)`; the momentum `k x′` is conserved, so
/// `x′ = p/k` and `(log k)″ = (|x′|² − (log k)′²)/2`.
pub fn integrate_free_particles(init: &[FreeParticle], t_end: f64, dt: f64) -> Result<Trajectory> {
    let (n, h) = steps(0.0, t_end, dt)?;
    for (i, p) in init.iter().enumerate() {
        if !(p.k > 0.0) || p.x.len() != p.velocity.len() {
            return Err(Error::InvalidInput(format!("particle {i} needs positive charge and matching velocity")));
        }
    }
    let paths: Vec<Vec<ParticleSample>> = init
        .par_iter()
        .enumerate()
        .map(|(id, p)| {
            let momentum: Vec<f64> = p.velocity.iter().map(|v| p.k * v).collect();
            let p2: f64 = momentum.iter().map(|m| m * m).sum();
            // state (log k, (log k)′); positions follow from x′ = p e^{−log k}
            let rhs = |l: f64, q: f64| (q, 0.5 * (p2 * (-2.0 * l).exp() - q * q), (-l).exp());
            let mut l = p.k.ln();
            let mut q = p.rate;
            let mut x = p.x.clone();
            let sample = |x: &[f64], l: f64, q: f64| ParticleSample {
                x: x.to_vec(),
                k: l.exp(),
                velocity: momentum.iter().map(|m| m * (-l).exp()).collect(),
                rate: q,
            };
            let mut out = Vec::with_capacity(n + 1);
            out.push(sample(&x, l, q));
            for step in 0..n {
                let (a1, b1, c1) = rhs(l, q);
                let (a2, b2, c2) = rhs(l + 0.5 * h * a1, q + 0.5 * h * b1);
                let (a3, b3, c3) = rhs(l + 0.5 * h * a2, q + 0.5 * h * b2);
                let (a4, b4, c4) = rhs(l + h * a3, q + h * b3);
                let inv_k = (c1 + 2.0 * c2 + 2.0 * c3 + c4) / 6.0;
                for (xa, m) in x.iter_mut().zip(&momentum) {
                    *xa += h * m * inv_k;
                }
                l += h * (a1 + 2.0 * a2 + 2.0 * a3 + a4) / 6.0;
                q += h * (b1 + 2.0 * b2 + 2.0 * b3 + b4) / 6.0;
                if !l.is_finite() || !q.is_finite() {
                    return Err(Error::NonFinite(format!("particle {id} at t = {}", (step + 1) as f64 * h)));
                }
                out.push(sample(&x, l, q));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let times = (0..=n).map(|j| j as f64 * h).collect();
    Ok(transpose(times, (0..init.len()).collect(), paths))
}

/// Per-particle energies `∫ k((log k)′² + |x′|²) dt` by the trapezoid rule,
/// and their sum.
pub fn particle_energy(traj: &Trajectory) -> (Vec<f64>, f64) {
    let density = |s: &ParticleSample| s.k * (s.rate * s.rate + s.velocity.iter().map(|v| v * v).sum::<f64>());
    let mut per = vec![0.0; traj.ids.len()];
    for j in 1..traj.times.len() {
        let dt = traj.times[j] - traj.times[j - 1];
        for (i, e) in per.iter_mut().enumerate() {
            *e += 0.5 * dt * (density(&traj.frames[j - 1][i]) + density(&traj.frames[j][i]));
        }
    }
    let total = per.iter().sum();
    (per, total)
}

/// `s′` and `s″` of the arc position.
fn arc_rates(arc: &TransportArc, t: f64) -> (f64, f64) {
    if arc.c <= 0.0 {
        return (0.0, 0.0);
    }
    let r = (arc.a / arc.c).sqrt();
    let z = (t - arc.b) * r;
    let den = 1.0 + z * z;
    (2.0 * r / den, -4.0 * r * r * z / (den * den))
}

/// Residuals `2k″/k − k′²/k² − s′²` and `(k s′)′` of the travelling particle
/// of a one-point geodesic at time `t`.
pub fn euler_lagrange_residual(geo: &DiracGeodesic, t: f64) -> Result<(f64, f64)> {
    let arc = geo.transport.ok_or(Error::NoTransport)?;
    let k = arc.charge(t);
    let dk = 2.0 * arc.a * (t - arc.b);
    let ddk = 2.0 * arc.a;
    let (ds, dds) = arc_rates(&arc, t);
    Ok((2.0 * ddk / k - dk * dk / (k * k) - ds * ds, dk * ds + k * dds))
}
