//! TOML run configuration.
//!
//! Validation is exhaustive by design: `RunConfig::validate` walks every
//! precondition of the downstream modules and reports the full list of
//! violations at once, so a bad config never costs more than one edit cycle.

use crate::dynamics::PhysicalParams;
use crate::error::{Error, Result};
use crate::integrator::{IntegratorConfig, Scheme};
use crate::spectral::{Grid, VectorField, TWO_PI};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSection {
    pub nu: f64,
    pub d: f64,
    pub eps0: f64,
    /// "none" or "shear" (the single-mode force `amplitude * (sin y, 0)`)
    #[serde(default = "default_force")]
    pub force: String,
    #[serde(default = "default_amplitude")]
    pub force_amplitude: f64,
}

fn default_force() -> String {
    "shear".into()
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub epsilon: f64,
    pub seed: u64,
    /// base resolution of the sampled noise path
    #[serde(default = "default_dt_w")]
    pub dt_w: f64,
}

fn default_dt_w() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    /// "if_euler" or "if_rk2"
    #[serde(default = "default_scheme")]
    pub scheme: String,
}

fn default_scheme() -> String {
    "if_rk2".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// simulate | verify | pullback | sweep | convergence
    pub kind: String,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// seed for the random initial state / ensemble (separate from the noise seed)
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default = "default_init_velocity")]
    pub init_velocity_norm: f64,
    #[serde(default = "default_init_sigma_mean")]
    pub init_sigma_mean: f64,
    #[serde(default = "default_init_charge")]
    pub init_charge_norm: f64,
    /// pullback depths, positive and strictly increasing (pullback/sweep)
    #[serde(default = "default_depths")]
    pub pullback_depths: Vec<f64>,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default = "default_ensemble_radius")]
    pub ensemble_radius: f64,
    /// noise intensities for sweep/convergence experiments
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
}

fn default_t_final() -> f64 {
    1.0
}
fn default_record_every() -> usize {
    10
}
fn default_init_velocity() -> f64 {
    0.5
}
fn default_init_sigma_mean() -> f64 {
    1.0
}
fn default_init_charge() -> f64 {
    0.2
}
fn default_depths() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}
fn default_ensemble_size() -> usize {
    4
}
fn default_ensemble_radius() -> f64 {
    1.0
}
fn default_epsilons() -> Vec<f64> {
    vec![0.4, 0.2, 0.1, 0.05]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physical: PhysicalSection,
    pub noise: NoiseSection,
    pub grid: GridSection,
    pub integrator: IntegratorSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

pub const EXPERIMENT_KINDS: [&str; 5] =
    ["simulate", "verify", "pullback", "sweep", "convergence"];

impl RunConfig {
    /// The default regime: order-1 coefficients and the single-mode shear force.
    pub fn preset(kind: &str, out_dir: &str) -> RunConfig {
        RunConfig {
            physical: PhysicalSection {
                nu: 1.0,
                d: 1.0,
                eps0: 1.0,
                force: "shear".into(),
                force_amplitude: 1.0,
            },
            noise: NoiseSection {
                epsilon: 0.1,
                seed: 42,
                dt_w: 1e-3,
            },
            grid: GridSection { n: 32 },
            integrator: IntegratorSection {
                dt: 1e-3,
                scheme: "if_rk2".into(),
            },
            experiment: ExperimentSection {
                kind: kind.into(),
                t_final: default_t_final(),
                record_every: default_record_every(),
                init_seed: 1,
                init_velocity_norm: default_init_velocity(),
                init_sigma_mean: default_init_sigma_mean(),
                init_charge_norm: default_init_charge(),
                pullback_depths: default_depths(),
                ensemble_size: default_ensemble_size(),
                ensemble_radius: default_ensemble_radius(),
                epsilons: default_epsilons(),
            },
            output: OutputSection {
                dir: out_dir.into(),
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialized form, hex-encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_toml().as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every module precondition and returns the full list of
    /// violations in one error.
    pub fn validate(&self) -> Result<()> {
        let mut problems: Vec<String> = Vec::new();
        if !(self.physical.nu > 0.0) {
            problems.push(format!("physical.nu must be positive, got {}", self.physical.nu));
        }
        if !(self.physical.d > 0.0) {
            problems.push(format!("physical.d must be positive, got {}", self.physical.d));
        }
        if !(self.physical.eps0 > 0.0) {
            problems.push(format!(
                "physical.eps0 must be positive, got {}",
                self.physical.eps0
            ));
        }
        if self.physical.force != "none" && self.physical.force != "shear" {
            problems.push(format!(
                "physical.force must be \"none\" or \"shear\", got {:?}",
                self.physical.force
            ));
        }
        if !self.physical.force_amplitude.is_finite() {
            problems.push("physical.force_amplitude must be finite".into());
        }
        if !(self.noise.epsilon >= 0.0 && self.noise.epsilon.is_finite()) {
            problems.push(format!(
                "noise.epsilon must be finite and nonnegative, got {}",
                self.noise.epsilon
            ));
        }
        if !(self.noise.dt_w > 0.0) {
            problems.push(format!("noise.dt_w must be positive, got {}", self.noise.dt_w));
        }
        if self.grid.n < 4 || self.grid.n % 2 != 0 {
            problems.push(format!("grid.n must be even and at least 4, got {}", self.grid.n));
        }
        if !(self.integrator.dt > 0.0) {
            problems.push(format!(
                "integrator.dt must be positive, got {}",
                self.integrator.dt
            ));
        } else if self.grid.n >= 4 {
            // CFL plausibility at unit advection speed
            let h = TWO_PI / self.grid.n as f64;
            if self.integrator.dt > h {
                problems.push(format!(
                    "integrator.dt = {} exceeds the grid spacing {h:.4}; a unit-speed flow \
                     already violates the CFL condition",
                    self.integrator.dt
                ));
            }
        }
        if Scheme::parse(&self.integrator.scheme).is_err() {
            problems.push(format!(
                "integrator.scheme must be \"if_euler\" or \"if_rk2\", got {:?}",
                self.integrator.scheme
            ));
        }
        let e = &self.experiment;
        if !EXPERIMENT_KINDS.contains(&e.kind.as_str()) {
            problems.push(format!(
                "experiment.kind must be one of {EXPERIMENT_KINDS:?}, got {:?}",
                e.kind
            ));
        }
        if !(e.t_final > 0.0) {
            problems.push(format!("experiment.t_final must be positive, got {}", e.t_final));
        }
        if e.record_every == 0 {
            problems.push("experiment.record_every must be at least 1".into());
        }
        if !(e.init_velocity_norm >= 0.0) || !(e.init_charge_norm >= 0.0) {
            problems.push("experiment initial norms must be nonnegative".into());
        }
        if !(e.init_sigma_mean >= 0.0) {
            problems.push(format!(
                "experiment.init_sigma_mean must be nonnegative, got {}",
                e.init_sigma_mean
            ));
        }
        if e.pullback_depths.is_empty()
            || e.pullback_depths[0] <= 0.0
            || e.pullback_depths.windows(2).any(|w| w[1] <= w[0])
        {
            problems.push(format!(
                "experiment.pullback_depths must be positive and strictly increasing, got {:?}",
                e.pullback_depths
            ));
        }
        if e.ensemble_size == 0 {
            problems.push("experiment.ensemble_size must be at least 1".into());
        }
        if !(e.ensemble_radius > 0.0) {
            problems.push(format!(
                "experiment.ensemble_radius must be positive, got {}",
                e.ensemble_radius
            ));
        }
        if e.epsilons.is_empty() || e.epsilons.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            problems.push(format!(
                "experiment.epsilons must be a nonempty list of finite nonnegative values, got {:?}",
                e.epsilons
            ));
        }
        if self.output.dir.is_empty() {
            problems.push("output.dir must not be empty".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("\n")))
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n)
    }

    pub fn physical_params(&self) -> Result<PhysicalParams> {
        let grid = self.grid()?;
        let force = match self.physical.force.as_str() {
            "none" => VectorField::zero(grid),
            "shear" => PhysicalParams::shear_force(grid, self.physical.force_amplitude),
            other => return Err(Error::Config(format!("unknown force preset {other:?}"))),
        };
        PhysicalParams::new(self.physical.nu, self.physical.d, self.physical.eps0, force)
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig> {
        IntegratorConfig::new(self.integrator.dt, Scheme::parse(&self.integrator.scheme)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_round_trips_and_validates() {
        let cfg = RunConfig::preset("simulate", "out");
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(back.grid.n, 32);
    }

    #[test]
    fn validation_lists_every_problem_at_once() {
        let mut cfg = RunConfig::preset("simulate", "out");
        cfg.grid.n = 9;
        cfg.physical.nu = -1.0;
        cfg.integrator.scheme = "rk4".into();
        cfg.experiment.pullback_depths = vec![2.0, 1.0];
        let err = cfg.validate().unwrap_err().to_string();
        for needle in ["grid.n", "physical.nu", "integrator.scheme", "pullback_depths"] {
            assert!(err.contains(needle), "missing {needle} in:\n{err}");
        }
    }

    #[test]
    fn odd_grid_message_names_the_invariant() {
        let mut cfg = RunConfig::preset("simulate", "out");
        cfg.grid.n = 17;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("even"), "{err}");
    }

    #[test]
    fn cfl_implausible_dt_is_rejected() {
        let mut cfg = RunConfig::preset("simulate", "out");
        cfg.integrator.dt = 1.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("CFL"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = RunConfig::preset("simulate", "out").to_toml();
        text.push_str("\n[typo_section]\nx = 1\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::preset("simulate", "out");
        let mut b = a.clone();
        b.noise.seed = 43;
        assert_ne!(a.hash(), b.hash());
    }
}
