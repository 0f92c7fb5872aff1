//! Small-noise limit of individual solutions: along one fixed noise path,
//! the stochastic solution at time t approaches the deterministic one as the
//! noise intensity shrinks, at a rate linear in epsilon.
//!
//!     cargo run --release --example pathwise_convergence

use npns::attractor::pathwise_convergence_check;
use npns::dynamics::{Gauge, NpnsState, PhysicalParams};
use npns::integrator::{IntegratorConfig, Scheme};
use npns::noise::WienerPath;
use npns::spectral::Grid;
use rand::SeedableRng;

fn main() {
    let grid = Grid::new(32).unwrap();
    let params = PhysicalParams::new(1.0, 1.0, 1.0, PhysicalParams::shear_force(grid, 1.0)).unwrap();
    let cfg = IntegratorConfig::new(1e-3, Scheme::IfRk2).unwrap();
    let path = WienerPath::sample(21, -1.0, 2.0, 1e-3).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
    let x0 = NpnsState::random(grid, &mut rng, 0.5, 1.0, 0.3, Gauge::Physical);

    let epsilons = [0.4, 0.2, 0.1, 0.05];
    let table = pathwise_convergence_check(&epsilons, &path, &params, &x0, 1.0, &cfg).unwrap();
    println!("terminal error against the deterministic run, same path, t = 1:");
    println!("  epsilon   ||v_eps - u||_L2");
    for row in &table.rows {
        println!("  {:>7.2}   {:.6e}", row.epsilon, row.error);
    }
    println!("log-log slope:        {:.3}", table.slope);
    println!("strictly decreasing:  {}", table.strictly_decreasing);
}
