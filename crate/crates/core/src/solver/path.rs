use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{bounded_lipschitz, GridMeasure, PotentialField};

/// Discrete admissible path.
///
/// Densities live on the time nodes `t_0 = 0 < … < t_N = 1`; each interval
/// `[t_k, t_{k+1}]` carries one potential couple and the value of
/// `∫(|∇u|²+u²)dρ` on that interval.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimePath {
    pub times: Vec<f64>,
    pub densities: Vec<GridMeasure>,
    pub potentials: Vec<PotentialField>,
    pub step_energy: Vec<f64>,
}

impl SpaceTimePath {
    pub fn new(
        times: Vec<f64>,
        densities: Vec<GridMeasure>,
        potentials: Vec<PotentialField>,
        step_energy: Vec<f64>,
    ) -> Result<Self> {
        let n = times.len();
        if n < 2 || densities.len() != n || potentials.len() != n - 1 || step_energy.len() != n - 1 {
            return Err(Error::InvalidInput(format!(
                "path needs N+1 times and densities and N potentials and energies; got {}, {}, {}, {}",
                n,
                densities.len(),
                potentials.len(),
                step_energy.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("path times must increase".into()));
        }
        if step_energy.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::InvalidInput("step energies must be finite and nonnegative".into()));
        }
        let grid = densities[0].grid();
        for d in &densities {
            grid.check_same(d.grid())?;
        }
        for p in &potentials {
            grid.check_same(&p.grid)?;
        }
        Ok(Self { times, densities, potentials, step_energy })
    }

    /// Path whose interval energies are evaluated on the mean of the two node
    /// densities.
    pub fn from_frames(times: Vec<f64>, densities: Vec<GridMeasure>, potentials: Vec<PotentialField>) -> Result<Self> {
        if densities.len() != potentials.len() + 1 {
            return Err(Error::InvalidInput("need one more density than potentials".into()));
        }
        let step_energy = potentials
            .iter()
            .enumerate()
            .map(|(k, p)| p.h1_norm_sq(&densities[k].lerp(&densities[k + 1], 0.5)?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(times, densities, potentials, step_energy)
    }

    pub fn intervals(&self) -> usize {
        self.potentials.len()
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// `E = Σ step_energy·Δt`.
    pub fn total_energy(&self) -> f64 {
        self.step_energy.iter().enumerate().map(|(k, e)| e * self.dt(k)).sum()
    }

    /// Norm `‖𝔲‖_{H¹(dρ)}` of each interval, measured on the mean of the
    /// node densities.
    pub fn speeds(&self) -> Result<Vec<f64>> {
        (0..self.intervals())
            .map(|k| {
                let mid = self.densities[k].lerp(&self.densities[k + 1], 0.5)?;
                Ok(self.potentials[k].h1_norm_sq(&mid)?.sqrt())
            })
            .collect()
    }

    /// Constant-speed reparametrization.
    ///
    /// With `λ_k = √step_energy_k` the arclength `S(t)` is piecewise linear;
    /// new nodes are placed at `S⁻¹(Lτ)` for uniform `τ` and densities are
    /// interpolated linearly in time. On each new interval the potential of
    /// the old interval containing its midpoint is rescaled by `L/λ_k`. The
    /// stored energy of a new interval integrates `(λ_k · L/λ_k)²` over the
    /// old intervals it overlaps, so it equals `L² ≤ E`.
    pub fn reparametrize_arclength(&self) -> Result<SpaceTimePath> {
        let n = self.intervals();
        let lambda: Vec<f64> = self.step_energy.iter().map(|e| e.sqrt()).collect();
        let mut cum = vec![0.0; n + 1];
        for k in 0..n {
            cum[k + 1] = cum[k] + lambda[k] * self.dt(k);
        }
        let length = cum[n];
        if length <= 0.0 {
            return Ok(self.clone());
        }
        // old time and interval reached at arclength `s`
        let invert = |s: f64| -> (f64, usize) {
            let s = s.clamp(0.0, length);
            let mut k = match cum.iter().position(|&c| c >= s) {
                Some(0) | None => 0,
                Some(j) => j - 1,
            };
            while k + 1 < n && lambda[k] == 0.0 {
                k += 1;
            }
            let t = if lambda[k] > 0.0 {
                self.times[k] + (s - cum[k]) / lambda[k]
            } else {
                self.times[k]
            };
            (t.clamp(self.times[k], self.times[k + 1]), k)
        };
        let density_at = |t: f64, k: usize| -> Result<GridMeasure> {
            let theta = (t - self.times[k]) / self.dt(k);
            self.densities[k].lerp(&self.densities[k + 1], theta.clamp(0.0, 1.0))
        };
        let t_end = self.times[n];
        let t_start = self.times[0];
        let times: Vec<f64> = (0..=n).map(|j| t_start + (t_end - t_start) * j as f64 / n as f64).collect();
        let mut densities = Vec::with_capacity(n + 1);
        densities.push(self.densities[0].clone());
        for j in 1..n {
            let (t, k) = invert(length * j as f64 / n as f64);
            densities.push(density_at(t, k)?);
        }
        densities.push(self.densities[n].clone());

        let span = t_end - t_start;
        let speed = length / span;
        let mut potentials = Vec::with_capacity(n);
        for j in 0..n {
            let (_, k) = invert(length * (j as f64 + 0.5) / n as f64);
            potentials.push(self.potentials[k].scaled(speed / lambda[k]));
        }
        let step_energy = vec![speed * speed; n];
        Self::new(times, densities, potentials, step_energy)
    }

    /// Checks of the mass bound and the two ½-Hölder estimates along the path.
    ///
    /// The bounded-Lipschitz check is run on up to `max_nodes` evenly spaced
    /// nodes (all pairs among them); `bl_tol` is the tolerance of each lower
    /// bound.
    pub fn diagnostics(&self, max_nodes: usize, bl_tol: f64) -> Result<PathDiagnostics> {
        let energy = self.total_energy();
        let masses: Vec<f64> = self.densities.iter().map(GridMeasure::mass).collect();
        let n = masses.len() - 1;
        let bound = 2.0 * (masses[0].max(masses[n]) + energy);
        let holder = (bound * energy).sqrt();
        let max_mass = masses.iter().cloned().fold(0.0, f64::max);

        let mut mass_holder_margin = f64::INFINITY;
        for i in 0..=n {
            for j in i + 1..=n {
                let allowed = holder * (self.times[j] - self.times[i]).sqrt();
                mass_holder_margin = mass_holder_margin.min(allowed - (masses[j] - masses[i]).abs());
            }
        }

        let count = max_nodes.clamp(2, n + 1);
        let mut nodes: Vec<usize> = (0..count).map(|i| (i * n + (count - 1) / 2) / (count - 1)).collect();
        nodes.dedup();
        let mut bl_holder_margin = f64::INFINITY;
        let mut pairs_checked = 0;
        for (a, &i) in nodes.iter().enumerate() {
            for &j in &nodes[a + 1..] {
                let bl = bounded_lipschitz(&self.densities[i], &self.densities[j], bl_tol)?.lower_bound;
                let allowed = holder * (self.times[j] - self.times[i]).sqrt();
                bl_holder_margin = bl_holder_margin.min(allowed - bl);
                pairs_checked += 1;
            }
        }
        Ok(PathDiagnostics {
            energy,
            mass_bound: bound,
            max_mass,
            mass_margin: bound - max_mass,
            mass_holder_margin,
            bl_holder_margin,
            pairs_checked,
        })
    }

    /// Writes one JSON file per node plus `index.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.times.len());
        for (k, (t, rho)) in self.times.iter().zip(&self.densities).enumerate() {
            let name = format!("frame_{k:05}.json");
            let frame = Frame {
                t: *t,
                density: rho.clone(),
                potential: self.potentials.get(k).cloned(),
                step_energy: self.step_energy.get(k).copied(),
            };
            fs::write(dir.join(&name), serde_json::to_string(&frame)?)?;
            files.push(name);
        }
        let index = Index { times: self.times.clone(), total_energy: self.total_energy(), frames: files };
        fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index: Index = serde_json::from_str(&fs::read_to_string(dir.join("index.json"))?)?;
        let mut densities = Vec::new();
        let mut potentials = Vec::new();
        let mut energies = Vec::new();
        for name in &index.frames {
            let frame: Frame = serde_json::from_str(&fs::read_to_string(dir.join(name))?)?;
            densities.push(frame.density);
            potentials.extend(frame.potential);
            energies.extend(frame.step_energy);
        }
        Self::new(index.times, densities, potentials, energies)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Frame {
    t: f64,
    density: GridMeasure,
    /// Potential of the interval starting at this node; absent on the last node.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    potential: Option<PotentialField>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    step_energy: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Index {
    times: Vec<f64>,
    total_energy: f64,
    frames: Vec<String>,
}

/// Margins of the a-priori path estimates; every margin is `bound − value`
/// and is nonnegative when the estimate holds.
#[derive(Clone, Debug, Serialize)]
pub struct PathDiagnostics {
    pub energy: f64,
    /// `M = 2(max{m₀,m₁} + E)`.
    pub mass_bound: f64,
    pub max_mass: f64,
    pub mass_margin: f64,
    /// `min √(ME)|t−s|^½ − |m_t − m_s|` over all node pairs.
    pub mass_holder_margin: f64,
    /// `min √(ME)|t−s|^½ − d_BL(ρ_t, ρ_s)` over the sampled node pairs.
    pub bl_holder_margin: f64,
    pub pairs_checked: usize,
}

impl PathDiagnostics {
    pub fn holds(&self) -> bool {
        self.mass_margin >= 0.0 && self.mass_holder_margin >= 0.0 && self.bl_holder_margin >= 0.0
    }
}
