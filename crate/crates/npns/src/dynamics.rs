//! Right-hand sides of the deterministic Nernst-Planck-Navier-Stokes system
//! and of its pathwise-transformed counterpart in `(v, sigma, rho)` variables,
//! where `sigma = c1 + c2` is the total ion concentration and `rho = c1 - c2`
//! the charge density.
//!
//! Transformed momentum equation (`z = exp(-eps * omega(t))`):
//!
//! ```text
//! dv/dt + nu A v + (1/z) B(v) = -z P[rho grad Phi] + z f
//! ```
//!
//! with `-eps0 Delta Phi = rho`, and
//!
//! ```text
//! d(sigma)/dt + (1/z)(v . grad sigma) = D Delta sigma + D div(rho grad Phi)
//! d(rho)/dt   + (1/z)(v . grad rho)   = D Delta rho   + D div(sigma grad Phi)
//! ```
//!
//! The deterministic system is the `z = 1` special case in the physical
//! gauge. Pressure is eliminated by the Leray projection and never carried.

use crate::error::{Error, Result};
use crate::spectral::{advect_scalar, advect_vector, solve_poisson, Grid, SpectralField, VectorField};
use rand::Rng;

/// Which variable the `velocity` component of a state holds: the physical
/// velocity `u` or the transformed variable `v = z u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    Physical,
    Transformed,
}

impl Gauge {
    pub fn name(&self) -> &'static str {
        match self {
            Gauge::Physical => "physical",
            Gauge::Transformed => "transformed",
        }
    }
}

/// Physical parameters: viscosity, ionic diffusivity, Debye coefficient and
/// the time-independent divergence-free body force.
#[derive(Debug, Clone)]
pub struct PhysicalParams {
    pub nu: f64,
    pub dcoef: f64,
    pub eps0: f64,
    pub force: VectorField,
}

impl PhysicalParams {
    pub fn new(nu: f64, dcoef: f64, eps0: f64, force: VectorField) -> Result<Self> {
        for (name, v) in [("nu", nu), ("D", dcoef), ("eps0", eps0)] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        let defect = force.leray_project().sub(&force).norm_l2();
        if defect > 1e-10 * force.norm_l2().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "body force is not divergence-free (Leray defect {defect:.3e})"
            )));
        }
        if force.x.mean().abs() > 1e-12 || force.y.mean().abs() > 1e-12 {
            return Err(Error::InvalidParameter(
                "body force must be mean-free".into(),
            ));
        }
        Ok(PhysicalParams {
            nu,
            dcoef,
            eps0,
            force,
        })
    }

    /// Single-mode shear force `amplitude * (sin y, 0)`.
    pub fn shear_force(grid: Grid, amplitude: f64) -> VectorField {
        let mut fx = SpectralField::zero(grid);
        // sin y = (e^{iy} - e^{-iy}) / 2i
        fx.set_mode_pair(0, 1, num_complex::Complex64::new(0.0, -0.5 * amplitude));
        VectorField {
            x: fx,
            y: SpectralField::zero(grid),
        }
    }
}

/// The triple `(velocity, sigma, rho)` at a time instant, in one gauge.
#[derive(Debug, Clone)]
pub struct NpnsState {
    pub velocity: VectorField,
    pub sigma: SpectralField,
    pub rho: SpectralField,
    pub time: f64,
    pub gauge: Gauge,
}

impl NpnsState {
    /// Validating constructor: velocity must be divergence-free and mean-free,
    /// rho mean-free, sigma with nonnegative mean.
    pub fn new(
        velocity: VectorField,
        sigma: SpectralField,
        rho: SpectralField,
        time: f64,
        gauge: Gauge,
    ) -> Result<Self> {
        let div = velocity.divergence().norm_l2();
        if div > 1e-12 * velocity.norm_l2().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "velocity not divergence-free (||div u|| = {div:.3e})"
            )));
        }
        if velocity.x.mean().abs() > 1e-12 || velocity.y.mean().abs() > 1e-12 {
            return Err(Error::InvalidParameter("velocity must be mean-free".into()));
        }
        if rho.mean().abs() > 1e-10 * rho.norm_l2().max(1.0) {
            return Err(Error::InvalidParameter(
                "rho must be mean-free (charge neutrality)".into(),
            ));
        }
        if sigma.mean() < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma mean must be nonnegative, got {}",
                sigma.mean()
            )));
        }
        Ok(NpnsState {
            velocity,
            sigma,
            rho,
            time,
            gauge,
        })
    }

    pub fn zero(grid: Grid, gauge: Gauge) -> Self {
        NpnsState {
            velocity: VectorField::zero(grid),
            sigma: SpectralField::zero(grid),
            rho: SpectralField::zero(grid),
            time: 0.0,
            gauge,
        }
    }

    /// Random state with physically sensible structure: divergence-free
    /// velocity, positive mean concentration dominating its perturbation
    /// (so both species start nonnegative), and a small mean-free charge.
    pub fn random(
        grid: Grid,
        rng: &mut impl Rng,
        u_norm: f64,
        sigma_mean: f64,
        charge_norm: f64,
        gauge: Gauge,
    ) -> Self {
        let velocity = VectorField::random_divergence_free(grid, rng, 3, u_norm);
        let mut sigma = SpectralField::random(grid, rng, 3, 0.2 * sigma_mean.max(charge_norm));
        sigma.set_mean(sigma_mean);
        let rho = SpectralField::random(grid, rng, 3, charge_norm);
        NpnsState {
            velocity,
            sigma,
            rho,
            time: 0.0,
            gauge,
        }
    }

    pub fn grid(&self) -> Grid {
        self.velocity.grid()
    }

    /// Product-space H norm `(||u||^2 + ||sigma||^2 + ||rho||^2)^{1/2}`.
    pub fn norm_h(&self) -> f64 {
        (self.velocity.norm_l2().powi(2)
            + self.sigma.norm_l2().powi(2)
            + self.rho.norm_l2().powi(2))
        .sqrt()
    }

    /// Product-space V norm built from H1 seminorms.
    pub fn norm_v(&self) -> f64 {
        (self.velocity.seminorm_h1().powi(2)
            + self.sigma.seminorm_h1().powi(2)
            + self.rho.seminorm_h1().powi(2))
        .sqrt()
    }

    /// H distance to another state.
    pub fn dist_h(&self, other: &NpnsState) -> f64 {
        (self.velocity.sub(&other.velocity).norm_l2().powi(2)
            + self.sigma.sub(&other.sigma).norm_l2().powi(2)
            + self.rho.sub(&other.rho).norm_l2().powi(2))
        .sqrt()
    }

    /// V distance to another state.
    pub fn dist_v(&self, other: &NpnsState) -> f64 {
        (self.velocity.sub(&other.velocity).seminorm_h1().powi(2)
            + self.sigma.sub(&other.sigma).seminorm_h1().powi(2)
            + self.rho.sub(&other.rho).seminorm_h1().powi(2))
        .sqrt()
    }

    /// Pointwise minima of the recovered concentrations `c1 = (sigma + rho)/2`
    /// and `c2 = (sigma - rho)/2` on the collocation grid. Positivity is
    /// monitored, never enforced.
    pub fn min_concentrations(&self) -> (f64, f64) {
        let s = self.sigma.physical_unchecked();
        let r = self.rho.physical_unchecked();
        let mut min_c1 = f64::INFINITY;
        let mut min_c2 = f64::INFINITY;
        for (sv, rv) in s.iter().zip(&r) {
            min_c1 = min_c1.min(0.5 * (sv + rv));
            min_c2 = min_c2.min(0.5 * (sv - rv));
        }
        (min_c1, min_c2)
    }

    /// Gauge map `u -> v = z u` (or back with `1/z`); concentrations are
    /// untouched by the transformation.
    pub fn with_velocity_scaled(&self, factor: f64, gauge: Gauge) -> NpnsState {
        NpnsState {
            velocity: self.velocity.scaled(factor),
            sigma: self.sigma.clone(),
            rho: self.rho.clone(),
            time: self.time,
            gauge,
        }
    }
}

/// Time derivative of the state triple.
#[derive(Debug, Clone)]
pub struct StateDerivative {
    pub velocity: VectorField,
    pub sigma: SpectralField,
    pub rho: SpectralField,
}

/// Trilinear form `b(u, v, w) = ((u . grad) v, w)` via dealiased
/// pseudo-spectral products.
pub fn trilinear_b(u: &VectorField, v: &VectorField, w: &VectorField) -> Result<f64> {
    if u.grid() != v.grid() || v.grid() != w.grid() {
        return Err(Error::GridMismatch(u.grid().n(), v.grid().n()));
    }
    let mut total = 0.0;
    for (vc, wc) in [(&v.x, &w.x), (&v.y, &w.y)] {
        let mut adv = u.x.mul_dealiased(&vc.derivative(0))?;
        adv.axpy(1.0, &u.y.mul_dealiased(&vc.derivative(1))?);
        total += adv.inner_l2(wc);
    }
    Ok(total)
}

/// `B(u) = P[(u . grad) u]`, dealiased and projected.
pub fn nonlinear_term(u: &VectorField) -> Result<VectorField> {
    let adv = advect_vector(u, u)?;
    Ok(adv.leray_project())
}

/// `sign * div(c grad Phi)`, dealiased. Written in divergence form so the
/// zero mode vanishes identically (exact discrete mass conservation).
pub fn migration_term(c: &SpectralField, phi: &SpectralField, sign: f64) -> Result<SpectralField> {
    if c.grid() != phi.grid() {
        return Err(Error::GridMismatch(c.grid().n(), phi.grid().n()));
    }
    let fx = c.mul_dealiased(&phi.derivative(0))?;
    let fy = c.mul_dealiased(&phi.derivative(1))?;
    let mut out = fx.derivative(0).add(&fy.derivative(1));
    out.scale(sign);
    Ok(out)
}

fn rhs_impl(
    velocity: &VectorField,
    sigma: &SpectralField,
    rho: &SpectralField,
    params: &PhysicalParams,
    z: f64,
) -> Result<StateDerivative> {
    let phi = solve_poisson(rho, params.eps0)?;

    // momentum: nu Delta v - (1/z) B(v) - z P[rho grad Phi] + z f
    let mut dv = VectorField {
        x: velocity.x.laplacian().scaled(params.nu),
        y: velocity.y.laplacian().scaled(params.nu),
    };
    dv.axpy(-1.0 / z, &nonlinear_term(velocity)?);
    let coupling = VectorField {
        x: rho.mul_dealiased(&phi.derivative(0))?,
        y: rho.mul_dealiased(&phi.derivative(1))?,
    }
    .leray_project();
    dv.axpy(-z, &coupling);
    dv.axpy(z, &params.force);
    dv.x.make_mean_free();
    dv.y.make_mean_free();

    // sigma: D Delta sigma - (1/z)(v . grad sigma) + D div(rho grad Phi)
    let mut dsigma = sigma.laplacian().scaled(params.dcoef);
    dsigma.axpy(-1.0 / z, &advect_scalar(velocity, sigma)?);
    dsigma.axpy(params.dcoef, &migration_term(rho, &phi, 1.0)?);

    // rho: D Delta rho - (1/z)(v . grad rho) + D div(sigma grad Phi)
    let mut drho = rho.laplacian().scaled(params.dcoef);
    drho.axpy(-1.0 / z, &advect_scalar(velocity, rho)?);
    drho.axpy(params.dcoef, &migration_term(sigma, &phi, 1.0)?);

    Ok(StateDerivative {
        velocity: dv,
        sigma: dsigma,
        rho: drho,
    })
}

/// RHS of the deterministic system in the physical gauge.
pub fn rhs_deterministic(state: &NpnsState, params: &PhysicalParams) -> Result<StateDerivative> {
    if state.gauge != Gauge::Physical {
        return Err(Error::GaugeMismatch {
            expected: "physical",
            got: state.gauge.name(),
        });
    }
    rhs_impl(&state.velocity, &state.sigma, &state.rho, params, 1.0)
}

/// RHS of the transformed system with conversion value `z > 0`.
pub fn rhs_transformed(state: &NpnsState, params: &PhysicalParams, z: f64) -> Result<StateDerivative> {
    if state.gauge != Gauge::Transformed {
        return Err(Error::GaugeMismatch {
            expected: "transformed",
            got: state.gauge.name(),
        });
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "conversion value z must be positive and finite, got {z}"
        )));
    }
    rhs_impl(&state.velocity, &state.sigma, &state.rho, params, z)
}
