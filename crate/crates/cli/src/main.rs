//! Command-line runner for the numerical experiments.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or a stage
//! errors, 2 for configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use divfree::experiments::{self, ExperimentConfig, ExperimentError, FlatConfig};
use log::error;

#[derive(Parser)]
#[command(name = "divfree", version, about = "Divergence-free P2-P1 finite element experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a configuration key, e.g. `--set levels=3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run one of the verification suites with its defaults.
    Verify {
        suite: Suite,
        /// Use this mesh instead of the built-in ones.
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Element,
    Kernels,
    Stability,
}

fn config_of(command: &Command) -> Result<ExperimentConfig, experiments::ConfigError> {
    let flat = match command {
        Command::Run { config, overrides } => {
            let mut flat = FlatConfig::read(config)?;
            for o in overrides {
                flat.set(o)?;
            }
            flat
        }
        Command::Verify { suite, mesh, output, overrides } => {
            let id = match suite {
                Suite::Element => "verify-element",
                Suite::Kernels => "verify-kernels",
                Suite::Stability => "verify-stability",
            };
            let mut flat = FlatConfig::parse(&format!("experiment = {id}"))?;
            if let Some(m) = mesh {
                flat.set(&format!("mesh.file={}", m.display()))?;
            }
            if let Some(o) = output {
                flat.set(&format!("output={}", o.display()))?;
            }
            for o in overrides {
                flat.set(o)?;
            }
            flat
        }
    };
    ExperimentConfig::from_flat(&flat)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = match config_of(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            error!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = match experiments::run(&config) {
        Ok(out) => out,
        Err(ExperimentError::Config(e)) => {
            error!("configuration error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            error!("{e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = out.write(&config.output) {
        error!("{e}");
        return ExitCode::from(1);
    }
    print!("{}", experiments::summary(&out.report));
    println!("results written to {}", config.output.display());
    if out.report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
