//! Finite-sample pullback attractor clouds, Hausdorff semi-distances between
//! them, and the small-noise comparison experiments.
//!
//! A cloud approximates the omega-limit construction by pulling a finite
//! initial ensemble back from increasingly deep start times along one noise
//! path. The approximation quality is never assumed: every cloud carries its
//! Cauchy gauge (the displacement between the two deepest pullback levels)
//! and a convergence flag, and the comparison experiments report distances
//! next to those gauges.

use crate::dynamics::{Gauge, NpnsState, PhysicalParams};
use crate::error::{Error, Result};
use crate::integrator::{cocycle, pullback, read_snapshot, write_snapshot, IntegratorConfig};
use crate::noise::{NoiseParams, WienerPath};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    H,
    V,
}

/// Finite point-cloud surrogate of the random attractor at time 0.
#[derive(Debug, Clone)]
pub struct AttractorCloud {
    pub epsilon: f64,
    pub seed: u64,
    /// deepest pullback depth used (positive)
    pub pullback_time: f64,
    /// states at time 0, physical gauge
    pub points: Vec<NpnsState>,
    /// max displacement per consecutive pullback-level pair
    pub displacements: Vec<f64>,
    /// Cauchy gauge: displacement between the two deepest levels
    pub gauge: f64,
    /// false when the displacements show no decrease over the last 3 levels
    pub converged: bool,
}

impl AttractorCloud {
    pub fn max_norm_h(&self) -> f64 {
        self.points.iter().map(|p| p.norm_h()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemiDistanceResult {
    pub value: f64,
    /// (index of the worst point of `a`, index of its nearest point of `b`)
    pub witness: (usize, usize),
    pub metric: Metric,
}

/// Pulls `init_ensemble` back from every depth in `t0_depths` (positive,
/// strictly increasing) and returns the deepest-level states with their
/// Cauchy gauge.
pub fn build_cloud(
    noise: &NoiseParams,
    path: &WienerPath,
    params: &PhysicalParams,
    t0_depths: &[f64],
    init_ensemble: &[NpnsState],
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<AttractorCloud> {
    if init_ensemble.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if t0_depths.is_empty() || t0_depths.windows(2).any(|w| w[1] <= w[0]) || t0_depths[0] <= 0.0 {
        return Err(Error::InvalidParameter(
            "pullback depths must be positive and strictly increasing".into(),
        ));
    }
    // make sure the shared path already covers the deepest window, so the
    // parallel jobs never regenerate it independently
    let deepest = *t0_depths.last().unwrap();
    let path = path.covering(-deepest, 0.0)?;
    let mut levels: Vec<Vec<NpnsState>> = Vec::with_capacity(t0_depths.len());
    for &depth in t0_depths {
        let level: Result<Vec<NpnsState>> = init_ensemble
            .par_iter()
            .map(|x0| pullback(x0, depth, &path, noise, params, cfg))
            .collect();
        levels.push(level?);
    }
    let mut displacements = Vec::new();
    for w in levels.windows(2) {
        let d = w[0]
            .iter()
            .zip(&w[1])
            .map(|(a, b)| a.dist_h(b))
            .fold(0.0_f64, f64::max);
        displacements.push(d);
    }
    let gauge = displacements.last().copied().unwrap_or(0.0);
    // converged unless the last 3 transitions show no decrease at all
    let converged = if displacements.len() < 3 {
        true
    } else {
        let tail = &displacements[displacements.len() - 3..];
        tail[2] < tail[0] || tail[2] < 1e-12
    };
    Ok(AttractorCloud {
        epsilon: noise.epsilon,
        seed,
        pullback_time: deepest,
        points: levels.pop().expect("nonempty by construction"),
        displacements,
        gauge,
        converged,
    })
}

/// Hausdorff semi-distance `sup_{a in A} inf_{b in B} d(a, b)` over finite
/// clouds, exact max-min with the witness pair.
pub fn semi_distance(
    a: &AttractorCloud,
    b: &AttractorCloud,
    metric: Metric,
) -> Result<SemiDistanceResult> {
    if a.points.is_empty() || b.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if a.points[0].grid() != b.points[0].grid() {
        return Err(Error::GridMismatch(
            a.points[0].grid().n(),
            b.points[0].grid().n(),
        ));
    }
    let d = |x: &NpnsState, y: &NpnsState| match metric {
        Metric::H => x.dist_h(y),
        Metric::V => x.dist_v(y),
    };
    let mut value = f64::NEG_INFINITY;
    let mut witness = (0, 0);
    for (i, pa) in a.points.iter().enumerate() {
        let mut best = f64::INFINITY;
        let mut best_j = 0;
        for (j, pb) in b.points.iter().enumerate() {
            let dij = d(pa, pb);
            if dij < best {
                best = dij;
                best_j = j;
            }
        }
        if best > value {
            value = best;
            witness = (i, best_j);
        }
    }
    Ok(SemiDistanceResult {
        value,
        witness,
        metric,
    })
}

/// One row of the small-noise solution comparison.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    /// `|| v^eps(t) - u(t) ||_{L^2}` against the eps = 0 run
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// log-log slope of error against epsilon (over nonzero entries)
    pub slope: f64,
    pub strictly_decreasing: bool,
}

/// Runs the same initial state over the same path at each noise intensity
/// and tabulates the terminal transformed-velocity error against the
/// deterministic solution.
pub fn pathwise_convergence_check(
    epsilons: &[f64],
    path: &WienerPath,
    params: &PhysicalParams,
    x0: &NpnsState,
    t_final: f64,
    cfg: &IntegratorConfig,
) -> Result<ConvergenceTable> {
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon list".into()));
    }
    let zero = NoiseParams::new(0.0)?;
    let reference = cocycle(x0, t_final, path, &zero, params, cfg)?;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let noise = NoiseParams::new(eps)?;
        let state = cocycle(x0, t_final, path, &noise, params, cfg)?;
        // compare in the transformed variable v = z u
        let z = path.z_of(t_final, eps)?;
        let v = state.velocity.scaled(z);
        let error = v.sub(&reference.velocity).norm_l2();
        rows.push(ConvergenceRow { epsilon: eps, error });
    }
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.epsilon > 0.0 && r.error > 0.0)
        .map(|r| (r.epsilon.ln(), r.error.ln()))
        .collect();
    let slope = if fit.len() >= 2 {
        let n = fit.len() as f64;
        let sx: f64 = fit.iter().map(|p| p.0).sum();
        let sy: f64 = fit.iter().map(|p| p.1).sum();
        let sxx: f64 = fit.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = fit.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    // strict decrease along decreasing epsilon
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let strictly_decreasing = sorted
        .windows(2)
        .all(|w| w[1].epsilon == w[0].epsilon || w[1].error < w[0].error);
    Ok(ConvergenceTable {
        rows,
        slope,
        strictly_decreasing,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub distance: f64,
    pub gauge: f64,
    pub converged: bool,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// gauge of the deterministic reference cloud
    pub reference_gauge: f64,
    /// true when every cloud involved converged
    pub conclusive: bool,
}

/// Builds the deterministic reference cloud at eps = 0 with the same
/// machinery, then measures `dist_H(A_eps, A_0)` for each noise intensity.
#[allow(clippy::too_many_arguments)]
pub fn upper_semicontinuity_sweep(
    epsilons: &[f64],
    path: &WienerPath,
    params: &PhysicalParams,
    t0_depths: &[f64],
    init_ensemble: &[NpnsState],
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<SweepResult> {
    let zero = NoiseParams::new(0.0)?;
    let reference = build_cloud(&zero, path, params, t0_depths, init_ensemble, cfg, seed)?;
    let mut rows = Vec::with_capacity(epsilons.len());
    let mut conclusive = reference.converged;
    for &eps in epsilons {
        let started = std::time::Instant::now();
        let noise = NoiseParams::new(eps)?;
        let cloud = build_cloud(&noise, path, params, t0_depths, init_ensemble, cfg, seed)?;
        let dist = semi_distance(&cloud, &reference, Metric::H)?;
        conclusive &= cloud.converged;
        rows.push(SweepRow {
            epsilon: eps,
            distance: dist.value,
            gauge: cloud.gauge,
            converged: cloud.converged,
            runtime_s: started.elapsed().as_secs_f64(),
        });
    }
    Ok(SweepResult {
        rows,
        reference_gauge: reference.gauge,
        conclusive,
    })
}

/// Index entry persisted next to the per-point snapshots.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CloudIndex {
    epsilon: f64,
    seed: u64,
    pullback_time: f64,
    displacements: Vec<f64>,
    gauge: f64,
    converged: bool,
    files: Vec<String>,
}

/// Writes one snapshot file per point plus `index.json` into `dir`.
pub fn save_cloud(dir: &Path, cloud: &AttractorCloud) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(cloud.points.len());
    for (i, p) in cloud.points.iter().enumerate() {
        let name = format!("point_{i:04}.npns");
        let mut f = fs::File::create(dir.join(&name))?;
        write_snapshot(&mut f, p)?;
        files.push(name);
    }
    let index = CloudIndex {
        epsilon: cloud.epsilon,
        seed: cloud.seed,
        pullback_time: cloud.pullback_time,
        displacements: cloud.displacements.clone(),
        gauge: cloud.gauge,
        converged: cloud.converged,
        files,
    };
    let json = serde_json::to_string_pretty(&index)?;
    fs::write(dir.join("index.json"), json)?;
    Ok(())
}

pub fn load_cloud(dir: &Path) -> Result<AttractorCloud> {
    let index: CloudIndex = serde_json::from_str(&fs::read_to_string(dir.join("index.json"))?)?;
    let mut points = Vec::with_capacity(index.files.len());
    for name in &index.files {
        let mut f = fs::File::open(dir.join(name))?;
        points.push(read_snapshot(&mut f)?);
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(AttractorCloud {
        epsilon: index.epsilon,
        seed: index.seed,
        pullback_time: index.pullback_time,
        points,
        displacements: index.displacements,
        gauge: index.gauge,
        converged: index.converged,
    })
}

/// Generates a reproducible ensemble of physical-gauge states inside the H
/// ball of radius `radius`.
pub fn random_ensemble(
    grid: crate::spectral::Grid,
    n: usize,
    radius: f64,
    sigma_mean: f64,
    seed: u64,
) -> Vec<NpnsState> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut x = NpnsState::random(
                grid,
                &mut rng,
                0.4 * radius,
                sigma_mean,
                0.2 * radius,
                Gauge::Physical,
            );
            let norm = x.norm_h();
            if norm > radius {
                let s = 0.9 * radius / norm;
                x.velocity.scale(s);
                x.sigma.scale(s);
                x.rho.scale(s);
            }
            x
        })
        .collect()
}
