//! Runs the compare pipeline from a config file.
//!
//! `cargo run --example compare_pipelines -- configs/warmup.toml /tmp/out`

use contact_workbench::experiment::{run_experiment, ExperimentConfig};

fn main() -> contact_workbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "configs/warmup.toml".into());
    let out = args
        .next()
        .unwrap_or_else(|| std::env::temp_dir().join("compare").display().to_string());
    let config = ExperimentConfig::load(&path)?;
    let outcome = run_experiment(&config, out.as_ref())?;
    if let Some(c) = &outcome.manifest.comparison {
        println!("{}", c.note);
        println!("passed: {}, max |z| = {:.3}", c.passed, c.max_z);
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
