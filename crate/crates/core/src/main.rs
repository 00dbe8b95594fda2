use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use contact_workbench::experiment::{
    run_experiment, ExperimentConfig, ExperimentKind, WORKERS_ENV,
};
use contact_workbench::Error;

#[derive(Parser)]
#[command(
    version,
    about = "Stationary correlation functions and Gillespie simulation of the contact model with immigration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the experiment named in the config.
        #[arg(long)]
        experiment: Option<String>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    if err.is_validation() {
        1
    } else {
        2
    }
}

fn configure_workers() -> Result<(), Error> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let workers: usize = value.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Error::Config(format!(
            "{WORKERS_ENV} must be a positive integer, got {value:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(config: PathBuf, experiment: Option<String>, out: PathBuf) -> Result<bool, Error> {
    configure_workers()?;
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(name) = experiment {
        cfg.experiment = name.parse::<ExperimentKind>()?;
        cfg.validate()?;
    }
    let outcome = run_experiment(&cfg, &out)?;
    if let Some(c) = &outcome.manifest.comparison {
        println!("{}", c.note);
        println!(
            "comparison {}: {} of {} tests fail, max |z| = {:.3}",
            if c.passed { "passed" } else { "FAILED" },
            c.failures,
            c.tests,
            c.max_z
        );
    }
    println!(
        "wrote {} files to {}",
        outcome.files.len(),
        outcome.out_dir.display()
    );
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Command::Run {
        config,
        experiment,
        out,
    } = Cli::parse().command;
    match run(config, experiment, out) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
