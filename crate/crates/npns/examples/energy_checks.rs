//! Runs the a-priori inequality checks on a stochastic trajectory: ion mass
//! dissipation, the exponential decay of the ionic fluctuation energy, and
//! the Gronwall bound on the velocity energy. Each check reports violations
//! against a dt-calibrated tolerance, and records whether its hypotheses
//! (here: nonnegative concentrations) actually held along the run.
//!
//!     cargo run --release --example energy_checks

use npns::dynamics::{Gauge, NpnsState, PhysicalParams};
use npns::integrator::{cocycle_traj, IntegratorConfig, Scheme};
use npns::noise::{NoiseParams, WienerPath};
use npns::spectral::Grid;
use npns::verify::{
    check_decay_h, check_gradient_decay_v, check_mass_dissipation, check_velocity_energy,
    CheckReport, DEFAULT_C_CHECK,
};
use rand::SeedableRng;

fn show(rep: &CheckReport) {
    println!(
        "{:<22} {:?}: {} rows, {} violations, worst residual {:+.3e}",
        rep.name,
        rep.status,
        rep.rows.len(),
        rep.violations,
        rep.worst_residual
    );
    for (k, v) in &rep.fitted {
        println!("    {k} = {v:.6e}");
    }
    for note in &rep.notes {
        println!("    note: {note}");
    }
}

fn main() {
    let grid = Grid::new(16).unwrap();
    let params = PhysicalParams::new(1.0, 1.0, 1.0, PhysicalParams::shear_force(grid, 0.5)).unwrap();
    let noise = NoiseParams::new(0.1).unwrap();
    let dt = 1e-3;
    let cfg = IntegratorConfig::new(dt, Scheme::IfRk2).unwrap();
    let path = WienerPath::sample(3, -1.0, 6.0, dt).unwrap();

    // mean concentration 2 with perturbation 0.5 keeps both species positive
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let x0 = NpnsState::random(grid, &mut rng, 0.4, 2.0, 0.5, Gauge::Physical);
    println!(
        "initial min concentrations: {:.3} / {:.3}",
        x0.min_concentrations().0,
        x0.min_concentrations().1
    );

    let traj = cocycle_traj(&x0, 5.0, &path, &noise, &params, &cfg, 50).unwrap();
    show(&check_mass_dissipation(&traj.records, &params, dt, DEFAULT_C_CHECK).unwrap());
    show(&check_decay_h(&traj.records, &params, dt).unwrap());
    show(&check_velocity_energy(&traj.records, &params, dt, DEFAULT_C_CHECK).unwrap());
    show(&check_gradient_decay_v(&traj.records, &params).unwrap());
}
