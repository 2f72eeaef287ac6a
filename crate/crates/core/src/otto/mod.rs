//! Lagrangian and second-order calculus: charged particle trajectories, the
//! Hamilton–Jacobi geodesic system on a grid, and Hessians of internal energies.

pub mod hessian;
pub mod hj;
pub mod particles;

pub use hessian::{hessian_fd, hessian_internal_energy, hessian_report, HessianReport, InternalEnergySpec};
pub use hj::{
    direction_invariance_check, hj_evolve, hj_geodesic_step, metric_speed_sq, speed_drift, DirectionCheck,
};
pub use particles::{
    euler_lagrange_residual, integrate_free_particles, integrate_particles, particle_energy, ConstantPotential,
    FnPotential, FreeParticle, Particle, ParticleSample, ParticleState, Potential, SqueezePotential, Trajectory,
};
