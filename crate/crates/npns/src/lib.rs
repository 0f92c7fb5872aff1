//! Pseudo-spectral simulation and verification laboratory for the 2D periodic
//! Nernst-Planck-Navier-Stokes system, deterministic and with multiplicative
//! Stratonovich noise on the momentum equation.
//!
//! The library is organized around six subsystems:
//!
//! * [`spectral`] - Fourier representation of periodic fields on `[0,2pi]^2`,
//!   exact differential operators, Leray projection, and the Poisson solve
//!   coupling charge density to electric potential.
//! * [`dynamics`] - right-hand sides of the deterministic system and of the
//!   pathwise-transformed stochastic system in `(v, sigma, rho)` variables.
//! * [`noise`] - seeded two-sided Wiener paths, the shift `theta_t`, and the
//!   conversion process `z(t, omega) = exp(-eps * omega(t))`.
//! * [`integrator`] - integrating-factor IMEX time stepping, the cocycle map,
//!   and pullback evaluation.
//! * [`verify`] - machine-checked a priori estimates (dissipation, decay and
//!   energy bounds) and random absorbing radii.
//! * [`attractor`] - pullback attractor clouds, Hausdorff semi-distance, and
//!   the noise-intensity sweep probing upper semicontinuity.
//!
//! The `runner` and `config` modules tie everything into reproducible,
//! file-backed experiments; the `npns` binary exposes them as subcommands.
//! See the crate examples for one runnable program per capability.

pub mod attractor;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod noise;
pub mod runner;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
