//! Computes the random absorbing radii from path-dependent quadratures and
//! then probes absorption empirically: states started far in the past, well
//! outside the ball, must have entered it by time 0 — and stay inside for
//! every deeper start.
//!
//!     cargo run --release --example absorbing_ball

use npns::dynamics::PhysicalParams;
use npns::integrator::{IntegratorConfig, Scheme};
use npns::noise::{NoiseParams, WienerPath};
use npns::spectral::Grid;
use npns::verify::{compute_absorbing_radii, verify_absorption};

fn main() {
    let grid = Grid::new(16).unwrap();
    let nu = 2.0;
    let params = PhysicalParams::new(nu, 1.0, 1.0, PhysicalParams::shear_force(grid, 0.1)).unwrap();
    let noise = NoiseParams::new(0.05).unwrap();
    let dt = 2e-3;
    let cfg = IntegratorConfig::new(dt, Scheme::IfRk2).unwrap();

    // the quadratures need the path far into the past; the integrands decay
    // like e^{nu s}, so truncation at t* with nu |t*| >= ln(1e12) is cheap
    let t_star = -(1e12_f64.ln()) / nu;
    let path = WienerPath::sample(9, t_star - 1.0, 1.0, 0.01).unwrap();

    let r0 = 0.5; // bound on the ionic part of the initial data
    let a_const = 0.01; // gradient-decay amplitude, from the fitted check
    let radii = compute_absorbing_radii(&path, &noise, &params, t_star, r0, a_const).unwrap();
    println!("absorbing radii along this path:");
    println!("  R0 = {:.4}   (deterministic, ionic)", radii.r0);
    println!("  R1 = {:.4}   (random, velocity)", radii.r1);
    println!("  R2 = {:.4}   R3 = {:.4}", radii.r2, radii.r3);
    println!("  R4 = {:.4e} R5 = {:.4e}", radii.r4, radii.r5);
    println!("  truncation tail bound: {:.3e}", radii.truncation_tail_bound);
    println!("  H ball radius 2 R0 + R1 = {:.4}", radii.ball_h());
    println!("  V ball radius R4 + 2 R5 = {:.4e}", radii.ball_v());

    // pull back from dyadic depths, starting 10x outside the ball
    let ball = radii.ball_h();
    let gauge = 0.05 * ball;
    let report = verify_absorption(
        &path, &noise, &params, &cfg, ball, gauge, 10.0 * ball, r0, 4, 8.0, 77,
    )
    .unwrap();
    println!("\npullback absorption into B(0, {:.4}):", ball + gauge);
    println!("  start norm: {:.4}", 0.9 * report.ensemble_radius);
    for (depth, worst, inside) in &report.levels {
        println!(
            "  from t0 = -{depth:>4}: worst ||x(0)|| = {worst:.4}  inside: {inside}"
        );
    }
    match report.entry_time {
        Some(t) => println!("  entered for good at depth {t}"),
        None => println!("  not absorbed within the tested depths"),
    }
}
