//! The config-driven experiment pipeline used by the `npns` binary:
//! validates a TOML config, runs it, and inspects the manifest with its
//! checksummed file index. The same entry points back every CLI subcommand.
//!
//!     cargo run --release --example experiment_pipeline

use npns::config::RunConfig;
use npns::runner::{run, RunManifest};

fn main() {
    let dir = std::env::temp_dir().join("npns_example_pipeline");
    let _ = std::fs::remove_dir_all(&dir);

    let mut config = RunConfig::preset("simulate", dir.to_str().unwrap());
    config.grid.n = 16;
    config.integrator.dt = 2e-3;
    config.noise.dt_w = 2e-3;
    config.experiment.t_final = 0.5;
    config.experiment.record_every = 25;
    println!("config hash: {}", config.hash());

    // validation is exhaustive: every problem is reported at once
    let mut broken = config.clone();
    broken.grid.n = 9;
    broken.physical.nu = -1.0;
    println!("\na broken config reports all problems together:");
    println!("{}\n", broken.validate().unwrap_err());

    run(&config, 2, None, false).unwrap();
    let manifest = RunManifest::load(&dir).unwrap();
    println!("run completed in {:.2}s, artifacts:", manifest.wall_clock_s);
    for f in &manifest.files {
        println!("  {:<18} sha256 {}...", f.name, &f.sha256[..16]);
    }
    for (k, v) in &manifest.summary {
        println!("  {k} = {v}");
    }

    // identical config, identical bytes: the determinism contract
    let dir2 = std::env::temp_dir().join("npns_example_pipeline_2");
    let _ = std::fs::remove_dir_all(&dir2);
    run(&config, 8, Some(&dir2), false).unwrap();
    let again = RunManifest::load(&dir2).unwrap();
    let same = manifest
        .files
        .iter()
        .zip(&again.files)
        .all(|(a, b)| a.sha256 == b.sha256);
    println!("rerun with 8 workers produced identical files: {same}");
}
