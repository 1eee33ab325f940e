//! Command-line front end: `csc-invasion <command> --config run.toml`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use csc_invasion::config::ExperimentConfig;
use csc_invasion::experiments;
use csc_invasion::Error;

#[derive(Parser)]
#[command(
    version,
    about = "Invasion fronts of a cancer stem cell / tumour cell model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Concurrent sweep members
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate the PDE and write snapshots, front traces and mass
    Simulate,
    /// Fit front speeds and log corrections against the predictions
    Speeds,
    /// Double roots, pinching and essential-spectrum curves
    Dispersion,
    /// Travelling-wave profile and its asymptotics
    Tw,
    /// Weighted spectrum of the front linearisation
    Spectrum,
    /// Total-mass α-sweep
    Mass,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Speeds => "speeds",
            Command::Dispersion => "dispersion",
            Command::Tw => "tw",
            Command::Spectrum => "spectrum",
            Command::Mass => "mass",
        }
    }
}

/// `CSC_INVASION_OUT` beats `--out`, which beats the config.
fn output_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os("CSC_INVASION_OUT") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cli
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.output.dir)),
    }
}

fn run(cli: &Cli, cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let summary = match cli.command {
        Command::Simulate => serde_json::to_string_pretty(&experiments::simulate(cfg, out)?)?,
        Command::Speeds => serde_json::to_string_pretty(&experiments::speeds(cfg, out)?)?,
        Command::Dispersion => serde_json::to_string_pretty(&experiments::dispersion(cfg, out)?)?,
        Command::Tw => serde_json::to_string_pretty(&experiments::tw(cfg, out)?)?,
        Command::Spectrum => serde_json::to_string_pretty(&experiments::spectrum(cfg, out)?)?,
        Command::Mass => serde_json::to_string_pretty(&experiments::mass(cfg, out, cli.jobs)?)?,
    };
    Ok(summary)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_config() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config.clone() else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let result = ExperimentConfig::load(&path)
        .map_err(anyhow::Error::from)
        .and_then(|cfg| {
            let out = output_dir(&cli, &cfg);
            run(&cli, &cfg, &out).with_context(|| {
                format!(
                    "{} failed (output in {})",
                    cli.command.name(),
                    out.display()
                )
            })
        });
    match result {
        Ok(summary) => {
            // a closed pipe downstream is not a failure of the experiment
            let _ = writeln!(std::io::stdout(), "{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
