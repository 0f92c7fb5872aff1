//! The classical viscous decay benchmark: with no ions and no force, the
//! cellular flow u = (sin x cos y, -cos x sin y) is an exact solution whose
//! amplitude decays like e^{-2 nu t} (its modes have |k|^2 = 2, so the
//! energy decays like e^{-4 nu t}). The nonlinear term only produces a
//! pressure gradient, so the integrating-factor schemes reproduce the decay
//! to round-off; a generic ionic state then shows the scheme orders.
//!
//!     cargo run --release --example taylor_green_decay

use npns::dynamics::{Gauge, NpnsState, PhysicalParams};
use npns::integrator::{integrate, IntegratorConfig, Scheme};
use npns::spectral::{Grid, SpectralField, VectorField};
use num_complex::Complex64;
use rand::SeedableRng;

fn cellular_flow(grid: Grid, amp: f64) -> VectorField {
    // sin x cos y = (e^{i(x+y)} + e^{i(x-y)}) / 4i, and the conjugates
    let q = Complex64::new(0.0, -0.25 * amp);
    let ux = SpectralField::from_modes(grid, &[(1, 1, q), (1, -1, q)]);
    let uy = SpectralField::from_modes(grid, &[(1, 1, -q), (1, -1, q)]);
    VectorField::new(ux, uy).unwrap()
}

fn main() {
    let grid = Grid::new(32).unwrap();
    let nu = 1.0;
    let params = PhysicalParams::new(nu, 1.0, 1.0, VectorField::zero(grid)).unwrap();
    let x0 = NpnsState::new(
        cellular_flow(grid, 1.0),
        SpectralField::zero(grid),
        SpectralField::zero(grid),
        0.0,
        Gauge::Physical,
    )
    .unwrap();
    let z_one = |_: f64| Ok(1.0);
    let e0 = x0.velocity.norm_l2().powi(2);

    println!("terminal energy error at t = 1 vs E0 e^(-4 nu t):");
    for (scheme, dt) in [(Scheme::IfEuler, 1e-3), (Scheme::IfRk2, 1e-3)] {
        let cfg = IntegratorConfig::new(dt, scheme).unwrap();
        let steps = (1.0 / dt).round() as usize;
        let traj = integrate(&x0, &params, &cfg, &z_one, steps, steps).unwrap();
        let energy = traj.state.velocity.norm_l2().powi(2);
        let exact = e0 * (-4.0 * nu).exp();
        println!(
            "  {:<9} dt={dt:.0e}: |E - E_exact| = {:.3e}",
            scheme.name(),
            (energy - exact).abs()
        );
    }

    // self-convergence order under dt-halving, on a generic ionic state
    // (Taylor-Green itself is reproduced exactly, so it cannot resolve order)
    println!("self-convergence of the terminal state on a generic ionic flow:");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let y0 = NpnsState::random(grid, &mut rng, 0.5, 1.0, 0.4, Gauge::Physical);
    for scheme in [Scheme::IfEuler, Scheme::IfRk2] {
        let run = |dt: f64| {
            let cfg = IntegratorConfig::new(dt, scheme).unwrap();
            let steps = (0.25 / dt).round() as usize;
            integrate(&y0, &params, &cfg, &z_one, steps, steps)
                .unwrap()
                .state
        };
        // dt values that divide the horizon exactly, so all runs end at the
        // same instant
        let (a, b, c) = (run(5e-3), run(2.5e-3), run(1.25e-3));
        let e1 = a.dist_h(&b);
        let e2 = b.dist_h(&c);
        println!(
            "  {:<9} observed order {:.2}",
            scheme.name(),
            (e1 / e2).log2()
        );
    }
}
