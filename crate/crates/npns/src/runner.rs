//! Experiment orchestration: drives the solver and the checks from a
//! `RunConfig`, persists every artifact under the output directory, and
//! writes an atomic `manifest.json` describing the run.
//!
//! Determinism contract: for a fixed config (hence config hash) and code
//! version, every result file is byte-identical across reruns and across
//! worker counts. The only nondeterministic bytes live in the manifest's
//! wall-clock field and in the `runtime_s` column of sweep outputs, which
//! record timing and are excluded from the contract.

use crate::attractor::{
    build_cloud, pathwise_convergence_check, random_ensemble, save_cloud, semi_distance, Metric,
};
use crate::config::RunConfig;
use crate::dynamics::{Gauge, NpnsState};
use crate::error::{Error, Result};
use crate::integrator::{cocycle_traj, write_snapshot, DiagnosticsRecord, Trajectory};
use crate::noise::{NoiseParams, WienerPath};
use crate::verify::{
    check_decay_h, check_gradient_decay_v, check_mass_dissipation, check_time_averaged_bound,
    check_velocity_energy, CheckReport, CheckStatus, DEFAULT_C_CHECK,
};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Final status of a driver run, mapped to the process exit code by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// at least one enabled check reported a genuine failure
    CheckFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub wall_clock_s: f64,
    /// per-check or per-stage status summary
    pub summary: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
    /// set when a run was interrupted and partial results were preserved
    pub incomplete: bool,
}

impl RunManifest {
    fn new(config: &RunConfig) -> Self {
        RunManifest {
            config_hash: config.hash(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.noise.seed,
            wall_clock_s: 0.0,
            summary: BTreeMap::new(),
            files: Vec::new(),
            incomplete: false,
        }
    }

    /// Writes `manifest.json` atomically (temp file + rename).
    pub fn write_atomic(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join("manifest.json.tmp");
        let target = dir.join("manifest.json");
        fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        fs::rename(&tmp, &target)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<RunManifest> {
        Ok(serde_json::from_str(&fs::read_to_string(
            dir.join("manifest.json"),
        )?)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Bookkeeping wrapper around the output directory: tracks written files and
/// their checksums for the manifest file index.
struct Workspace {
    dir: PathBuf,
    manifest: RunManifest,
    started: std::time::Instant,
}

impl Workspace {
    fn create(config: &RunConfig, dir: &Path) -> Result<Workspace> {
        fs::create_dir_all(dir)?;
        Ok(Workspace {
            dir: dir.to_path_buf(),
            manifest: RunManifest::new(config),
            started: std::time::Instant::now(),
        })
    }

    fn write_file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.record_file(name)?;
        Ok(())
    }

    /// Registers an already-written file (or directory tree) in the index.
    fn record_file(&mut self, name: &str) -> Result<()> {
        let path = self.dir.join(name);
        if path.is_dir() {
            let mut names: Vec<String> = fs::read_dir(&path)?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_file())
                .map(|e| format!("{name}/{}", e.file_name().to_string_lossy()))
                .collect();
            names.sort();
            for n in names {
                self.record_file(&n)?;
            }
            return Ok(());
        }
        let sha256 = sha256_file(&path)?;
        self.manifest.retain_entry(name);
        self.manifest.files.push(FileEntry {
            name: name.into(),
            sha256,
        });
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.manifest.summary.insert(key.into(), value.to_string());
    }

    fn finish(mut self, incomplete: bool) -> Result<()> {
        self.manifest.incomplete = incomplete;
        self.manifest.wall_clock_s = self.started.elapsed().as_secs_f64();
        self.manifest.files.sort_by(|a, b| a.name.cmp(&b.name));
        self.manifest.write_atomic(&self.dir)
    }
}

impl RunManifest {
    fn retain_entry(&mut self, name: &str) {
        self.files.retain(|f| f.name != name);
    }
}

/// Top-level dispatch. `workers` bounds the rayon pool; `output` overrides
/// the configured output directory; `resume` skips jobs whose results are
/// already on disk.
pub fn run(config: &RunConfig, workers: usize, output: Option<&Path>, resume: bool) -> Result<Outcome> {
    config.validate()?;
    let dir = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| match config.experiment.kind.as_str() {
        "simulate" => cmd_simulate(config, &dir),
        "verify" => cmd_verify(config, &dir),
        "pullback" => cmd_pullback(config, &dir),
        "sweep" => cmd_sweep(config, &dir, resume),
        "convergence" => cmd_convergence(config, &dir),
        other => Err(Error::Config(format!("unknown experiment kind {other:?}"))),
    })
}

fn initial_state(config: &RunConfig) -> Result<NpnsState> {
    let grid = config.grid()?;
    let e = &config.experiment;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(e.init_seed);
    Ok(NpnsState::random(
        grid,
        &mut rng,
        e.init_velocity_norm,
        e.init_sigma_mean,
        e.init_charge_norm,
        Gauge::Physical,
    ))
}

fn sample_path(config: &RunConfig, t_lo: f64, t_hi: f64) -> Result<WienerPath> {
    WienerPath::sample(
        config.noise.seed,
        t_lo.min(-config.noise.dt_w),
        t_hi.max(config.noise.dt_w),
        config.noise.dt_w,
    )
}

fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::from(DiagnosticsRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn run_trajectory(config: &RunConfig) -> Result<(Trajectory, WienerPath)> {
    let params = config.physical_params()?;
    let cfg = config.integrator_config()?;
    let noise = NoiseParams::new(config.noise.epsilon)?;
    let t_final = config.experiment.t_final;
    let path = sample_path(config, 0.0, t_final)?;
    let x0 = initial_state(config)?;
    let traj = cocycle_traj(
        &x0,
        t_final,
        &path,
        &noise,
        &params,
        &cfg,
        config.experiment.record_every,
    )?;
    Ok((traj, path))
}

pub fn cmd_simulate(config: &RunConfig, dir: &Path) -> Result<Outcome> {
    let mut ws = Workspace::create(config, dir)?;
    let (traj, path) = run_trajectory(config)?;
    ws.write_file("diagnostics.csv", diagnostics_csv(&traj.records).as_bytes())?;
    let mut snap = Vec::new();
    write_snapshot(&mut snap, &traj.state)?;
    ws.write_file("final_state.npns", &snap)?;
    let mut path_csv = Vec::new();
    path.write_csv(&mut path_csv)?;
    ws.write_file("path.csv", &path_csv)?;
    ws.note("steps", traj.records.len());
    ws.note("final_norm_h", format!("{:.6e}", traj.state.norm_h()));
    // only meaningful for long paths; short horizons cannot resolve growth
    match path.sublinearity_check() {
        Ok(rep) => ws.note("sublinearity_flagged", rep.flagged),
        Err(_) => ws.note("sublinearity_flagged", "horizon too short"),
    }
    ws.finish(false)?;
    Ok(Outcome::Success)
}

fn summarize(report: &CheckReport) -> String {
    format!(
        "{:?} (violations {}, worst residual {:.3e})",
        report.status, report.violations, report.worst_residual
    )
}

pub fn cmd_verify(config: &RunConfig, dir: &Path) -> Result<Outcome> {
    let mut ws = Workspace::create(config, dir)?;
    let (traj, _path) = run_trajectory(config)?;
    ws.write_file("diagnostics.csv", diagnostics_csv(&traj.records).as_bytes())?;
    let params = config.physical_params()?;
    let dt = config.integrator.dt;
    let window = (config.experiment.t_final / 4.0).max(4.0 * dt);
    let reports = vec![
        check_mass_dissipation(&traj.records, &params, dt, DEFAULT_C_CHECK)?,
        check_decay_h(&traj.records, &params, dt)?,
        check_velocity_energy(&traj.records, &params, dt, DEFAULT_C_CHECK)?,
        check_gradient_decay_v(&traj.records, &params)?,
        check_time_averaged_bound(&traj.records, &params, window)?,
    ];
    let mut failed = false;
    let mut summary_json = BTreeMap::new();
    for rep in &reports {
        let mut csv = Vec::new();
        rep.write_csv(&mut csv)?;
        ws.write_file(&format!("check_{}.csv", rep.name), &csv)?;
        ws.note(&format!("check.{}", rep.name), summarize(rep));
        failed |= rep.status == CheckStatus::Failed;
        summary_json.insert(
            rep.name.clone(),
            serde_json::json!({
                "status": format!("{:?}", rep.status),
                "violations": rep.violations,
                "worst_residual": rep.worst_residual,
                "fitted": rep.fitted,
                "notes": rep.notes,
            }),
        );
    }
    ws.write_file(
        "check_summary.json",
        serde_json::to_string_pretty(&summary_json)?.as_bytes(),
    )?;
    ws.finish(false)?;
    Ok(if failed {
        Outcome::CheckFailure
    } else {
        Outcome::Success
    })
}

pub fn cmd_pullback(config: &RunConfig, dir: &Path) -> Result<Outcome> {
    let mut ws = Workspace::create(config, dir)?;
    let e = &config.experiment;
    let params = config.physical_params()?;
    let cfg = config.integrator_config()?;
    let noise = NoiseParams::new(config.noise.epsilon)?;
    let deepest = *e.pullback_depths.last().unwrap();
    let path = sample_path(config, -deepest, 0.0)?;
    let grid = config.grid()?;
    let ensemble = random_ensemble(
        grid,
        e.ensemble_size,
        e.ensemble_radius,
        e.init_sigma_mean,
        e.init_seed,
    );
    let cloud = build_cloud(
        &noise,
        &path,
        &params,
        &e.pullback_depths,
        &ensemble,
        &cfg,
        config.noise.seed,
    )?;
    save_cloud(&dir.join("cloud"), &cloud)?;
    ws.record_file("cloud")?;
    ws.note("cloud.gauge", format!("{:.6e}", cloud.gauge));
    ws.note("cloud.converged", cloud.converged);
    ws.note("cloud.points", cloud.points.len());
    ws.finish(false)?;
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SweepJobResult {
    epsilon: f64,
    distance: f64,
    gauge: f64,
    converged: bool,
    runtime_s: f64,
}

fn sweep_job_name(epsilon: f64) -> String {
    // bit-exact tag so resume matches the same float value
    format!("jobs/eps_{:016x}.json", epsilon.to_bits())
}

pub fn cmd_sweep(config: &RunConfig, dir: &Path, resume: bool) -> Result<Outcome> {
    let mut ws = Workspace::create(config, dir)?;
    let e = &config.experiment;
    let params = config.physical_params()?;
    let cfg = config.integrator_config()?;
    let deepest = *e.pullback_depths.last().unwrap();
    let path = sample_path(config, -deepest, 0.0)?;
    let grid = config.grid()?;
    let ensemble = random_ensemble(
        grid,
        e.ensemble_size,
        e.ensemble_radius,
        e.init_sigma_mean,
        e.init_seed,
    );
    // deterministic reference attractor at eps = 0
    let zero = NoiseParams::new(0.0)?;
    let reference = build_cloud(
        &zero,
        &path,
        &params,
        &e.pullback_depths,
        &ensemble,
        &cfg,
        config.noise.seed,
    )?;
    ws.note("reference.gauge", format!("{:.6e}", reference.gauge));
    let mut rows: Vec<SweepJobResult> = Vec::with_capacity(e.epsilons.len());
    let mut incomplete = false;
    for &eps in &e.epsilons {
        let job = sweep_job_name(eps);
        let job_path = dir.join(&job);
        if resume && job_path.is_file() {
            if let Ok(prev) = serde_json::from_str::<SweepJobResult>(&fs::read_to_string(&job_path)?)
            {
                ws.record_file(&job)?;
                rows.push(prev);
                continue;
            }
        }
        let started = std::time::Instant::now();
        let noise = NoiseParams::new(eps)?;
        let result = (|| -> Result<SweepJobResult> {
            let cloud = build_cloud(
                &noise,
                &path,
                &params,
                &e.pullback_depths,
                &ensemble,
                &cfg,
                config.noise.seed,
            )?;
            let dist = semi_distance(&cloud, &reference, Metric::H)?;
            let cloud_dir = format!("cloud_eps_{:016x}", eps.to_bits());
            save_cloud(&dir.join(&cloud_dir), &cloud)?;
            Ok(SweepJobResult {
                epsilon: eps,
                distance: dist.value,
                gauge: cloud.gauge,
                converged: cloud.converged,
                runtime_s: started.elapsed().as_secs_f64(),
            })
        })();
        match result {
            Ok(row) => {
                ws.write_file(&job, serde_json::to_string_pretty(&row)?.as_bytes())?;
                ws.record_file(&format!("cloud_eps_{:016x}", eps.to_bits()))?;
                rows.push(row);
            }
            Err(err) => {
                // preserve the completed jobs and flag the run
                ws.note("error", format!("eps {eps}: {err}"));
                incomplete = true;
                break;
            }
        }
    }
    let mut csv = String::from("epsilon,distance,gauge,runtime_s\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.epsilon, r.distance, r.gauge, r.runtime_s
        ));
    }
    ws.write_file("sweep.csv", csv.as_bytes())?;
    ws.note("rows", rows.len());
    ws.finish(incomplete)?;
    if incomplete {
        Err(Error::MissingData("sweep incomplete; see manifest".into()))
    } else {
        Ok(Outcome::Success)
    }
}

pub fn cmd_convergence(config: &RunConfig, dir: &Path) -> Result<Outcome> {
    let mut ws = Workspace::create(config, dir)?;
    let e = &config.experiment;
    let params = config.physical_params()?;
    let cfg = config.integrator_config()?;
    let path = sample_path(config, 0.0, e.t_final)?;
    let x0 = initial_state(config)?;
    let table = pathwise_convergence_check(&e.epsilons, &path, &params, &x0, e.t_final, &cfg)?;
    let mut csv = String::from("epsilon,error\n");
    for r in &table.rows {
        csv.push_str(&format!("{},{}\n", r.epsilon, r.error));
    }
    ws.write_file("convergence.csv", csv.as_bytes())?;
    ws.note("slope", format!("{:.4}", table.slope));
    ws.note("strictly_decreasing", table.strictly_decreasing);
    ws.finish(false)?;
    Ok(Outcome::Success)
}
