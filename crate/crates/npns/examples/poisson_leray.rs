//! Spectral building blocks: Poisson solve for the electric potential,
//! Leray projection, and derivative exactness on band-limited data.
//!
//!     cargo run --release --example poisson_leray

use npns::spectral::{solve_poisson, Grid, SpectralField, VectorField, TWO_PI};
use num_complex::Complex64;
use rand::SeedableRng;

fn main() {
    let grid = Grid::new(32).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);

    // -eps0 * lap(phi) = rho with a single mode: phi = rho / (eps0 |k|^2)
    let eps0 = 0.5;
    let (kx, ky) = (3_i64, -2_i64);
    let rho = SpectralField::from_modes(grid, &[(kx, ky, Complex64::new(0.7, 0.2))]);
    let phi = solve_poisson(&rho, eps0).unwrap();
    let k2 = (kx * kx + ky * ky) as f64;
    let expected = rho.coeff(kx, ky) / (eps0 * k2);
    let err = (phi.coeff(kx, ky) - expected).norm() / expected.norm();
    println!("Poisson single mode ({kx},{ky}): relative error {err:.3e}");

    // Leray projection kills gradients and fixes divergence-free fields
    let scalar = SpectralField::random(grid, &mut rng, 5, 1.0);
    let gradient = VectorField::new(scalar.derivative(0), scalar.derivative(1)).unwrap();
    println!(
        "Leray of a pure gradient:   residual norm {:.3e}",
        gradient.leray_project().norm_l2()
    );
    let solenoidal = VectorField::random_divergence_free(grid, &mut rng, 5, 1.0);
    println!(
        "Leray fixes solenoidal:     change {:.3e}",
        solenoidal.leray_project().sub(&solenoidal).norm_l2()
    );
    println!(
        "divergence after projection {:.3e}",
        solenoidal.leray_project().divergence().norm_l2()
    );

    // spectral derivative is exact on band-limited data: d/dx sin(3x) = 3 cos(3x)
    let n = grid.n();
    let samples: Vec<f64> = (0..n * n)
        .map(|i| {
            let x = TWO_PI * (i % n) as f64 / n as f64;
            (3.0 * x).sin()
        })
        .collect();
    let f = SpectralField::from_samples(grid, &samples).unwrap();
    let df = f.derivative(0).to_physical().unwrap();
    let worst = (0..n * n)
        .map(|i| {
            let x = TWO_PI * (i % n) as f64 / n as f64;
            (df[i] - 3.0 * (3.0 * x).cos()).abs()
        })
        .fold(0.0_f64, f64::max);
    println!("derivative exactness:       max error {worst:.3e}");

    // Parseval: L2 norm agrees between coefficient and collocation sums
    let g = SpectralField::random(grid, &mut rng, 8, 2.5);
    let phys = g.to_physical().unwrap();
    let h2 = (TWO_PI / n as f64).powi(2);
    let quad = (phys.iter().map(|v| v * v).sum::<f64>() * h2).sqrt();
    println!(
        "Parseval identity:          relative error {:.3e}",
        (g.norm_l2() - quad).abs() / quad
    );
}
