//! The scalar noise path: seeded sampling, bit-stable refinement and
//! extension, the time-shift group law, and the sublinear-growth report that
//! underpins the convergence of the pullback integrals.
//!
//!     cargo run --release --example wiener_path

use npns::noise::WienerPath;

fn main() {
    let seed = 2024;
    let path = WienerPath::sample(seed, -4.0, 4.0, 0.01).unwrap();
    println!("omega(-2) = {:+.6}", path.omega(-2.0));
    println!("omega( 0) = {:+.6}  (always exactly 0)", path.omega(0.0));
    println!("omega( 2) = {:+.6}", path.omega(2.0));

    // refinement adds Brownian-bridge midpoints without touching coarse nodes
    let fine = path.refine();
    let drift = (fine.omega(-2.0) - path.omega(-2.0)).abs();
    println!("refinement preserves coarse nodes: |difference| = {drift:.3e}");

    // extension regenerates the overlap identically
    let wide = path.covering(-16.0, 4.0).unwrap();
    let overlap = (wide.omega(-3.5) - path.omega(-3.5)).abs();
    println!("extension preserves the overlap:   |difference| = {overlap:.3e}");

    // theta-shift group law: shifting by s then t equals shifting by s + t
    let a = path.shift_theta(0.75).unwrap().shift_theta(0.5).unwrap();
    let b = path.shift_theta(1.25).unwrap();
    println!(
        "shift group law defect at t = 1:   {:.3e}",
        (a.omega(1.0) - b.omega(1.0)).abs()
    );

    // the exponential path coefficient and its overflow guard
    let eps = 0.25;
    println!("z(1.5) = {:.6}", path.z_of(1.5, eps).unwrap());
    let huge = WienerPath::from_values(1.0, -1, vec![0.0, 0.0, 4000.0]).unwrap();
    println!(
        "z with |eps omega| too large: {:?}",
        huge.z_of(1.0, 1.0).unwrap_err()
    );

    // sublinearity over a long horizon: |omega(t)| / |t| should shrink
    let long = WienerPath::sample(seed, -2000.0, 2000.0, 1.0).unwrap();
    let report = long.sublinearity_check().unwrap();
    println!("sublinearity thresholds (horizon, max |omega|/|t| beyond it):");
    for (h, ratio) in &report.thresholds {
        println!("  t >= {h:>7.0}: {ratio:.4}");
    }
    println!("flagged as suspicious: {}", report.flagged);
}
